# # Privacy accounting
#
# From a target total budget to a per-step noise scale, and how the RDP route
# compares with a moments-accountant style estimate.

# %%
import numpy as np

from rdpgan import accountant as acc
from rdpgan import mechanism

# %% [markdown]
# Sensitivity is the loss bound divided by the batch size.

# %%
delta_s = mechanism.sensitivity(20, 64)
print("sensitivity", delta_s)

# %% [markdown]
# Calibrate sigma for a budget of 0.5 over 1000 generator iterations with five
# discriminator steps each, sampling 64 of 20000 rows.

# %%
q = 64 / 20000
cal = acc.calibrate_noise(0.5, 1e-5, 1000, 5, q, delta_s)
print(f"sigma={cal.sigma:.3f} alpha={cal.alpha:.4f} per-iteration eps={cal.epsilon_g:.2e}")

# %% [markdown]
# The closed-form bound vs the exact integer-order value. At small
# sensitivity-to-noise ratios the bound sits above the exact value.

# %%
params = acc.MechanismParams(q, delta_s, cal.sigma)
for alpha in (2, 4, 8, 32):
    exact = acc.rdp_subsampled_gaussian_exact(params, alpha).epsilon
    bound = acc.rdp_gaussian_bound(params, alpha).epsilon
    print(f"alpha={alpha:>2} exact={exact:.3e} bound={bound:.3e}")

# %% [markdown]
# RDP shrinks as 1/sigma^2, the moments-accountant estimate as 1/sigma.

# %%
for sigma in np.geomspace(0.5, 50, 6):
    print(f"sigma={sigma:7.3f} rdp/ma={acc.rdp_ma_ratio(sigma, q, 5, 1e-5, delta_s):.4f}")
print("crossover sigma", acc.rdp_ma_crossover(q, 5, 1e-5, delta_s))
