# # Noise schedules
#
# Predefined decays and the accuracy-driven controller, all spending the same
# total budget. Decaying noise costs more per iteration, so runs stop early.

# %%
from rdpgan import data, schedules, trainer

for t in (0, 10, 50, 100):
    print(t, schedules.time_decay(10, 0.05, t), round(schedules.exp_decay(10, 0.01, t), 4),
          schedules.step_decay(10, 0.6, t, 20))

# %%
points = data.gen_gaussian_ring(8, 2.0, 0.2, 2000, seed=0)
scorer = trainer.ring_scorer(points, seed=0, n_samples=500)
privacy = trainer.PrivacyConfig(epsilon_total=1.0)
for kind, k in (("fixed", 1.0), ("ant", 0.9), ("time", 0.05), ("exp", 0.01), ("step", 0.6)):
    cfg = trainer.TrainConfig(n_g=300, hidden=(16,), n_d=2, privacy=privacy,
                              schedule=trainer.ScheduleConfig(kind, k=k, t_star=20))
    report = trainer.train(cfg, points, scorer)
    print(f"{kind:>5}: {report.iterations:>3} iterations, final sigma {report.sigmas[-1]:.3f},"
          f" spent {report.ledger.spent:.4f}, {report.halt_reason}")
