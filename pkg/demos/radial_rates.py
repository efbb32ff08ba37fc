# %% [markdown]
# # Magnitudes grow like t^(1/3), the error decays like t^(-1/3)
#
# Keep the directions fixed and let every magnitude follow g <- g + c / g^2.

# %%
from ballapprox import geometry, relu_net, training

fam = geometry.make_directions(2, 8, "equal-angle")
cfg = training.TrainConfig(mode="radial", c=1e3, T=10**6, schedule="dyadic", error_samples=100_000,
                           sampler="sobol", seed=0)
trace = training.train(cfg, relu_net.NetworkWeights.from_family(fam, 25.0), fam)

for t, m, l1 in zip(trace.column("t"), trace.column("mag_1"), trace.column("l1")):
    print(f"t={t:>8.0f}  |w|={m:9.2f}  closed form {training.radial_exact(25.0, 1e3, t):9.2f}  L1 {l1:.5f}")

# %%
print("magnitude slope", training.fit_power_law(trace, "mag_1", (1e3, 1e6)).slope)
print("L1 slope       ", training.fit_power_law(trace, "l1", (1e2, 1e6)).slope)
