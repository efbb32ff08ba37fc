# %% [markdown]
# # Spherical partial sums of the ball indicator
#
# In d=1 the sums converge away from the jump, with the usual overshoot.
# At the center in d=3 they keep oscillating; in d=5 they blow up.

# %%
import numpy as np

from ballapprox import fourier

print("S_64(1/4) in d=1:", fourier.partial_sum_at(1, 64, [0.25]))
print("Gibbs overshoot N=128:", fourier.gibbs_overshoot(128))

# %%
d3 = fourier.divergence_scan(3, "0", np.arange(1, 513))
print("d=3 center, last few S_N:", d3.S[-4:].round(4))
print("oscillation amplitude [64,128]:", d3.window_amplitude(64, 128), "[256,512]:", d3.window_amplitude(256, 512))

# %%
d5 = fourier.divergence_scan(5, "0", np.arange(1, 513))
for i in range(3, 9):
    print(f"window [{2**i}, {2**(i+1)}]  max |S_N(0) - 1| = {d5.window_max_deviation(2**i, 2**(i + 1)):.2f}")

# %% [markdown]
# Gradient descent on the coefficients lands on the projection, no matter
# where it starts, as long as the step is small enough.

# %%
print("error after 100 steps:", fourier.fourier_gd(1, 8, 0.5, 100).projection_error())
try:
    fourier.fourier_gd(1, 8, 1.0, 100)
except Exception as exc:
    print(type(exc).__name__, exc)
