# # Utility of synthetic tabular rows under privacy
#
# Train on the mini census-like table at several budgets and compare marginal
# error and the accuracy of a real-data classifier on the generated rows.

# %%
import numpy as np

from rdpgan import data, trainer
from rdpgan import evaluation as ev
from rdpgan.rng import SeedPath

schema = data.adult_like_schema()
real = data.gen_mini_tabular(schema, data.adult_like_spec(), 20_000, seed=100)
clf = ev.train_eval_classifier(real.features()[:5000], real.labels[:5000], seed=0)
print("majority baseline", ev.majority_accuracy(real.labels))

# %%
for eps in (None, 5.0, 0.5):
    privacy = None if eps is None else trainer.PrivacyConfig(epsilon_total=eps)
    cfg = trainer.TrainConfig.for_schema(schema, privacy=privacy)
    report = trainer.train_rdp_gan(cfg, real)
    fake = trainer.generate_tabular(report.generator, schema, 5000, SeedPath(0, 0, 0, 9))
    err = np.mean([ev.abs_avg_error(ev.pmf_of_attribute(fake, a), ev.pmf_of_attribute(real, a))
                   for a in schema.names])
    acc = ev.utility_accuracy(clf, fake.features(), fake.labels)
    print(f"eps={eps}: sigma={report.sigma0:.2f} mean error={err:.3f} accuracy={acc:.3f}")
