"""
A synthetic two-modality face stand-in
======================================

"""

# Each identity is a latent vector. Rendering it produces a small RGB image
# built from coloured blobs on a gradient background, plus per-sample jitter.
import numpy as np

from diu_hfr.synthdata import SOURCE, TARGET, DataConfig, build_protocol, generate_dataset, make_latent, render

latent = make_latent(seed=0, identity=3)
source = render(latent, SOURCE, nuisance_seed=11)
target = render(latent, TARGET, nuisance_seed=11)
print("image shape:", source.shape, source.dtype)

# The target modality remixes the colour channels, blurs and adds more noise.
# A network trained only on source images has never seen this transform.
print("target channel mix:\n", np.array(TARGET.channel_mix))
print("mean |source - target| for the same identity:", float(np.abs(source - target).mean()))

# Different identities differ in the same modality too.
other = render(make_latent(0, 4), SOURCE, nuisance_seed=11)
print("mean |identity 3 - identity 4| in source:", float(np.abs(source - other).mean()))

# A dataset is a grid of identities x samples x modalities. A protocol splits
# identities into disjoint folds for training and evaluation.
config = DataConfig(seed=0, n_identities=10, n_samples=4)
dataset = generate_dataset(config)
protocol = build_protocol(config.seed, config.n_identities, config.n_samples, config.n_folds)
print("source array:", dataset.images["source"].shape)
for fold in protocol.folds:
    print(f"fold {fold.index}: train {list(fold.train_ids)}  eval {list(fold.eval_ids)}")
