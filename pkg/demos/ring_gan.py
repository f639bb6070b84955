# # A noise-free GAN on the eight-mode ring
#
# Histogram error against the real points before and after training.

# %%
from rdpgan import data, trainer
from rdpgan import evaluation as ev
from rdpgan.rng import SeedPath

points = data.gen_gaussian_ring(8, 2.0, 0.2, 2000, seed=0)
real = ev.histogram_pmf_2d(points, bins=8, extent=2.5)


def error(g_net):
    fake = trainer.sample_generator(g_net, 5000, SeedPath(0, 0, 0, 9))
    return ev.abs_avg_error(ev.histogram_pmf_2d(fake, bins=8, extent=2.5), real)


# %%
cfg = trainer.TrainConfig(n_g=1000)
print("error before", error(trainer.init_networks(cfg, 2)[0]))
report = trainer.train_rdp_gan(cfg, points)
print("error after ", error(report.generator))

# %% [markdown]
# The same run with a privacy budget: every iteration is charged to the ledger.

# %%
cfg = trainer.TrainConfig(n_g=1000, privacy=trainer.PrivacyConfig(epsilon_total=5.0))
report = trainer.train_rdp_gan(cfg, points)
print(f"sigma={report.sigma0:.3f} spent={report.ledger.spent:.6f} error={error(report.generator):.3f}")
