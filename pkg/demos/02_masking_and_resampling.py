# The two ingredients that feed the generator: a class-balancing draw of
# samples to be masked, and MCAR masks that replace a fraction of components
# with noise.
import numpy as np

from ibgan.balance import apply_mask, draw_mask, mask_pool_probabilities, noise, weighted_resample
from ibgan.dataio import SyntheticSpec, compute_priors, generate_synthetic, standardize

rng = np.random.default_rng(0)
spec = SyntheticSpec(sizes=(180, 20), k=2, m=6, phi=(0.8, 0.8),
                     mu=[[0, 0], [1, 1]], sigma=1.0)
ds = standardize(generate_synthetic(spec, rng))
w = compute_priors(ds)
print("priors:", w)
print("mask-pool class probabilities:", mask_pool_probabilities(w))

bp = weighted_resample(ds, w, n_mb=1000, rng=rng)
print("real pool class counts:", np.bincount(bp.real_y))
print("mask pool class counts:", np.bincount(bp.mask_y))
print("union:", np.bincount(np.r_[bp.real_y, bp.mask_y]) / 2000)

# With three or more classes the inverse rule over-corrects; the "exact" rule
# (2/|Y| - w) balances the union when it is feasible.
w3 = np.array([0.5, 0.3, 0.2])
for rule in ("inverse", "exact"):
    q = mask_pool_probabilities(w3, rule)
    print(f"{rule:>7}: q={np.round(q, 3)}  union={np.round((w3 + q) / 2, 3)}")

# Masking one sample at p_miss = 0.25.
x = ds.flat([0])
I = draw_mask(x.shape, 0.25, rng)
z = noise(x.shape, rng)
x_mask = apply_mask(x, I, z)
print("masked fraction:", I.mean())
print("observed slots untouched:", np.array_equal(x_mask[I == 0], x[I == 0]))

# p_miss = 0 gives back the bootstrap sample; p_miss = 1 is pure noise.
print(np.array_equal(apply_mask(x, draw_mask(x.shape, 0.0, rng), z), x),
      np.array_equal(apply_mask(x, draw_mask(x.shape, 1.0, rng), z), z))
