"""Marchenko-Pastur bulk law and noise-floor fitting
====================================================

Sample an iid Gaussian activation matrix, compare its eigenvalue spectrum
against the MP density, then pretend we don't know sigma2 and recover it
from the eigenvalue histogram alone.
"""
import numpy as np

from rmtkd import (MPModel, compute_covariance, eig_sym, fit_sigma2,
                   init_sigma2, mp_bulk_edges, mp_density,
                   sample_noise_matrix, wigner_semicircle_density)

d, n, sigma2 = 200, 2000, 1.5
am = sample_noise_matrix(d, n, sigma2, seed=0)
spectrum, _ = eig_sym(compute_covariance(am), n_samples=n)

# With the *true* sigma2 the bulk support should contain essentially all
# eigenvalues (edge fluctuations are O(n^-2/3)).
lm, lp = mp_bulk_edges(sigma2, spectrum.q)
inside = np.mean((spectrum.eigenvalues >= lm) & (spectrum.eigenvalues <= lp))
print(f"true sigma2={sigma2}, q={spectrum.q}")
print(f"bulk support [{lm:.3f}, {lp:.3f}], fraction inside: {inside:.3f}")

# Now fit sigma2 from the histogram, starting from the median eigenvalue.
s2_init = init_sigma2(spectrum, 0.5)
s2_star, fit = fit_sigma2(spectrum, s2_init)
print(f"init (median eigenvalue) = {s2_init:.4f}")
print(f"fitted sigma2            = {s2_star:.4f}  (rel err "
      f"{abs(s2_star - sigma2) / sigma2:.2%})")
print(f"histogram distance       = {fit.l2_distance:.4f} over "
      f"{len(fit.empirical_density)} bins")

# The fitted model density, sampled at a few bin centers.
model = MPModel(sigma2=s2_star, q=spectrum.q)
centers = (fit.bin_edges[:-1] + fit.bin_edges[1:]) / 2
print("\n  center   empirical   model")
for i in range(0, len(centers), max(1, len(centers) // 8)):
    print(f"  {centers[i]:7.3f}  {fit.empirical_density[i]:9.4f}"
          f"  {mp_density(centers[i], model):9.4f}")

# Reference point: the Wigner semicircle is the analogous law for symmetric
# iid matrices; at the origin it peaks at 1/(pi sigma).
print(f"\nwigner density at 0 (sigma2=1): "
      f"{wigner_semicircle_density(0.0, 1.0):.4f}  (1/pi = {1/np.pi:.4f})")
