"""
Synthetic learning curves and noise
===================================

Curves come from the parametric surface L(N, D) = N_c/N^a + D_c/D^b + E with
D = C / (6N). Noise is added in log-loss space and switched off once the
curve flattens.
"""

# %%
import numpy as np

from scalealloc import synthgen
from scalealloc.curves import ModelSpec
from scalealloc.preprocess import savgol_smooth

grid = synthgen.log_grid(1e15, 1e19, 200)
models = [ModelSpec(f"n{2**e}", 2**e) for e in (20, 24, 28)]
for m in models:
    c = synthgen.generate_curve(synthgen.HOFFMANN, m, grid)
    print(f"{m.id:>12}  points {len(c):3d}  loss {c.loss[0]:.3f} -> {c.loss[-1]:.3f}")

# %% Small models win at low compute, large ones later: the crossover is what
# makes picking a model early hard.
for c_probe in (1e16, 1e18, 1e19):
    losses = {m.id: float(synthgen.generate_curve(synthgen.HOFFMANN, m, [c_probe]).loss[0]) for m in models}
    print(f"C={c_probe:.0e}  best {min(losses, key=losses.get)}")

# %% The three noise processes at equal intensity.
m = models[1]
for kind in ("awgn", "brownian", "ou"):
    noise = synthgen.NoiseConfig(kind, sigma2=0.01, weight=1.0)
    c = synthgen.generate_curve(synthgen.HOFFMANN, m, grid, noise, seed=3)
    clean = synthgen.generate_curve(synthgen.HOFFMANN, m, grid)
    dev = np.log(c.loss) - np.log(clean.loss)
    print(f"{kind:>9}  max |log deviation| {np.abs(dev).max():.3f}  last noisy index {np.flatnonzero(dev).max()} of {len(dev) - 1}")

# %% Savitzky-Golay smoothing recovers most of the clean curve.
noisy = synthgen.generate_curve(synthgen.HOFFMANN, m, grid, synthgen.NoiseConfig("awgn", 0.001, 1.0), seed=1)
smooth = savgol_smooth(noisy, 11, 3)
clean = synthgen.generate_curve(synthgen.HOFFMANN, m, grid)
print("rms error noisy  ", np.sqrt(np.mean((noisy.loss - clean.loss) ** 2)))
print("rms error smooth ", np.sqrt(np.mean((smooth.loss - clean.loss) ** 2)))
