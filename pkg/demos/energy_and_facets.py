# %% [markdown]
# # Where the error lives
#
# For large magnitudes the squared error splits into thin slabs along each
# facet plus the polytope corners sticking out of the ball.

# %%
import math

from ballapprox import geometry, relu_net, training

axes = geometry.make_directions(2, 4, "equal-angle")
for M in (1e2, 1e3, 1e4):
    w = relu_net.NetworkWeights.from_family(axes, M)
    a = training.energy_direct(w, axes, 400_000, seed=3)
    b = training.energy_decomposed(w, axes, samples=50_000, seed=3)
    print(f"M={M:>7g}  direct {a.total:.6f} +- {a.std_error:.1e}  slabs+corners {b.total:.6f}")
print("corners only:", 0.5 * (1 - math.pi / 4))

# %% [markdown]
# More facets, smaller corners.

# %%
for N in (4, 8, 16, 32, 64):
    est, se = geometry.excess_volume(geometry.make_directions(2, N, "equal-angle"), 400_000, seed=0)
    print(f"N={N:>2}  excess {est:.5f} +- {se:.1e}")

# %%
octagon = geometry.make_directions(2, 8, "equal-angle")
print("octagon facet length:", geometry.facet_measure(octagon, 1, 1e3, 0.0, 100_000, seed=0).value,
      "vs", math.tan(math.pi / 8))
