"""
Contrastive and distillation losses, with hand-derived gradients
================================================================

"""

# Two small batches of embeddings: one for the source images, one for the
# target images, plus the teacher's embeddings of the source images.
import numpy as np

from diu_hfr.losses import LossConfig, contrastive_loss, distillation_loss, loss_gradients, total_loss

rng = np.random.default_rng(0)
e_s, e_t, e_teacher = rng.normal(size=(3, 6, 8))
labels = np.array([1, 1, 1, 0, 0, 0])

# The contrastive term pulls genuine pairs together and pushes impostor
# pairs below the cosine margin. It is returned per pair as well.
mean, per_pair = contrastive_loss(e_s, e_t, labels)
print("contrastive per pair:", np.round(per_pair, 3), "mean:", round(mean, 4))

# The distillation term is the mean Euclidean distance between teacher and
# student embeddings of the same source image.
print("distillation:", round(distillation_loss(e_teacher, e_s), 4))

# gamma blends the two. At the endpoints one term vanishes exactly.
for gamma in (0.0, 0.75, 1.0):
    parts = total_loss(e_s, e_t, e_teacher, labels, LossConfig(gamma=gamma))
    print(f"gamma={gamma:4}: L_C={parts.contrastive:.4f}  L_DL={parts.distillation:.4f}  total={parts.total:.4f}")

# The trainer never asks autograd for these gradients; they are written out
# by hand. A central difference confirms them.
cfg = LossConfig(gamma=0.75)
g_s, _ = loss_gradients(e_s, e_t, e_teacher, labels, cfg)
h = 1e-6
bump = np.zeros_like(e_s)
bump[2, 5] = h
numeric = (total_loss(e_s + bump, e_t, e_teacher, labels, cfg).total
           - total_loss(e_s - bump, e_t, e_teacher, labels, cfg).total) / (2 * h)
print(f"d total / d e_s[2, 5]: analytic {g_s[2, 5]:.8f}, numeric {numeric:.8f}")
