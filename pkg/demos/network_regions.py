# %% [markdown]
# # Eight half-spaces, one network
#
# Build the min-of-hyperplanes network for the regular octagon, run a few
# points through it and see which unit each point ends up in.

# %%
import numpy as np

from ballapprox import geometry, relu_net

fam = geometry.make_directions(2, 8, "equal-angle")
w = relu_net.NetworkWeights.from_family(fam, 40.0)
print("layer widths:", w.layer_widths())
print("biases:", w.biases[:3], "...")

# %% [markdown]
# The layered forward pass and the explicit formula agree to rounding.

# %%
rng = np.random.default_rng(1)
x = rng.uniform(-1, 1, size=(5, 2))
f, trace = relu_net.forward(w, x)
print(np.c_[x, f, relu_net.explicit_value(w, x)])

# %% [markdown]
# Each point carries a comparison-tree code. The unit picked by the code is
# the one whose weight is the spatial gradient there.

# %%
for xi in x:
    j = relu_net.locate_region(w, xi)
    print(xi.round(3), j, relu_net.region_code(j, w.n).describe())

# %%
x0 = np.array([0.1, -0.2])
print("gradient at", x0, "=", relu_net.spatial_gradient(w, x0))
