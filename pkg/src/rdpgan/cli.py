"""Command-line entry point: ``rdpgan {account,compare,train,eval,sweep} --config PATH``.

Every subcommand writes CSV files under the output directory. Floats are
written with 17 significant digits and lines end in ``\\n``, so two runs with
the same config and seed produce byte-identical files.

Exit codes: 0 success, 2 config error, 3 infeasible accounting,
4 training divergence.
"""

from __future__ import annotations

import argparse
import csv
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import accountant, nn, rng as rngmod, trainer
from . import data as datamod
from . import evaluation as ev
from .config import ExperimentConfig, load_config_file
from .errors import (CalibrationError, ConfigError, IngestionError, PrivacyConditionError,
                     SelectionError, TrainingDivergenceError)
from .rng import SeedPath
from .schedules import select_decay_rate

log = logging.getLogger("rdpgan")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INFEASIBLE = 3
EXIT_DIVERGED = 4

ACCOUNT_HEADER = "sigma,alpha_star,epsilon_rdp_bound,epsilon_rdp_exact,epsilon_dp,epsilon_ma"
CROSSOVER_HEADER = "q,n_d,delta,delta_s,sigma_star"
COMPARE_HEADER = "sigma,epsilon_rdp,epsilon_ma,ratio"
PMF_HEADER = "attribute,bin,label,p_real,p_synth"
ERRORS_HEADER = "attribute,abs_avg_error,l1_error,epsilon_total"
ACCURACY_HEADER = "direction,accuracy,majority_baseline"
SWEEP_HEADER = "schedule,k,iterations,final_accuracy,halt_reason"


def fmt(x) -> str:
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    if isinstance(x, str):
        return x
    return f"{float(x):.17g}"


def write_csv(path, header: str, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(header + "\n")
        out = csv.writer(fh, lineterminator="\n")
        out.writerows([fmt(v) for v in row] for row in rows)


def write_text(path, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


# ---------------------------------------------------------------- data

def load_data(cfg: ExperimentConfig):
    """Return ``(train, test, schema)``; ring data has no test split or schema."""
    kind = cfg.data_kind
    seed = cfg["data.seed"]
    if kind == "ring":
        pts = datamod.gen_gaussian_ring(cfg["data.n_modes"], cfg["data.radius"], cfg["data.std"],
                                        cfg.train_rows(), seed)
        return pts, None, None
    schema = datamod.adult_like_schema()
    if kind == "tabular":
        spec = datamod.adult_like_spec()
        train = datamod.gen_mini_tabular(schema, spec, cfg.train_rows(), seed)
        test = datamod.gen_mini_tabular(schema, spec, cfg.test_rows(), seed + 1)
        return train, test, schema
    train = datamod.load_delimited(cfg["data.path"], schema)
    for lineno, reason in train.rejected:
        log.warning("%s:%d rejected: %s", cfg["data.path"], lineno, reason)
    test = datamod.load_delimited(cfg["data.test_path"], schema) if cfg["data.test_path"] else train
    if len(train) == 0:
        raise ConfigError(f"{cfg['data.path']} has no valid rows")
    return train, test, schema


def real_classifier(cfg: ExperimentConfig, train):
    rows = min(len(train), cfg["eval.classifier_rows"])
    return ev.train_eval_classifier(train.features()[:rows], train.labels[:rows], seed=cfg.seed)


def make_scorer(cfg: ExperimentConfig, train, schema, classifier=None):
    if schema is None:
        return trainer.ring_scorer(train, cfg.seed, cfg["score.samples"], cfg["eval.bins"],
                                   cfg["eval.extent"])
    classifier = classifier or real_classifier(cfg, train)
    return trainer.tabular_scorer(classifier, schema, cfg.seed, cfg["score.samples"])


# ---------------------------------------------------------------- account / compare

def _accounting_inputs(cfg: ExperimentConfig, train_size: int):
    q = cfg["account.q"]
    if q is None:
        q = cfg["train.m"] / train_size
    return q, cfg["train.n_d"], cfg["privacy.delta"], cfg["privacy.delta_s"], cfg["train.n_g"]


def account_row(sigma, q, n_d, delta, delta_s):
    alpha = accountant.best_order()
    params = accountant.MechanismParams(q, delta_s, sigma, delta)
    bound = accountant.rdp_gaussian_bound(params, alpha).epsilon
    exact = accountant.rdp_subsampled_gaussian_exact(params, int(round(alpha))).epsilon
    try:
        eps_dp = accountant.generator_epsilon(params, n_d, alpha)
    except PrivacyConditionError:
        eps_dp = math.nan
    eps_ma = accountant.ma_epsilon(q, n_d, delta, sigma)
    return sigma, alpha, bound, exact, eps_dp, eps_ma


def _train_size(cfg: ExperimentConfig) -> int:
    if cfg.data_kind == "file":
        return len(load_data(cfg)[0])
    return cfg.train_rows()


def cmd_account(cfg: ExperimentConfig, out: str) -> int:
    q, n_d, delta, delta_s, n_g = _accounting_inputs(cfg, _train_size(cfg))
    sigmas = list(cfg["account.sigmas"])
    if cfg["privacy.epsilon_total"] is not None:
        cal = accountant.calibrate_noise(cfg["privacy.epsilon_total"], delta, n_g, n_d, q, delta_s)
        record = accountant.AccountingRecord(cal.alpha, cal.epsilon_rdp, cal.epsilon_g, delta,
                                             cal.sigma, q, delta_s, n_d, n_g)
        write_text(os.path.join(out, "calibration.txt"), record.to_text())
        if cal.sigma > 0:
            sigmas.append(cal.sigma)
    if cfg["privacy.sigma"] is not None:
        sigmas.append(cfg["privacy.sigma"])
    if not sigmas:
        raise ConfigError("nothing to account: set account.sigmas, privacy.sigma or privacy.epsilon_total")
    rows = [account_row(s, q, n_d, delta, delta_s) for s in sorted(set(sigmas))]
    write_csv(os.path.join(out, "account.csv"), ACCOUNT_HEADER, rows)
    star = accountant.rdp_ma_crossover(q, n_d, delta, delta_s)
    write_csv(os.path.join(out, "crossover.csv"), CROSSOVER_HEADER, [(q, n_d, delta, delta_s, star)])
    log.info("accounted %d noise scales; crossover sigma* = %.6g", len(rows), star)
    return EXIT_OK


def cmd_compare(cfg: ExperimentConfig, out: str) -> int:
    q, n_d, delta, delta_s, _ = _accounting_inputs(cfg, _train_size(cfg))
    lo, hi, points = cfg["compare.sigma_min"], cfg["compare.sigma_max"], cfg["compare.points"]
    if not 0 < lo < hi or points < 2:
        raise ConfigError("compare needs 0 < sigma_min < sigma_max and points >= 2")
    rows = []
    for sigma in np.geomspace(lo, hi, points):
        params = accountant.MechanismParams(q, delta_s, float(sigma), delta)
        try:
            rdp = accountant.generator_epsilon(params, n_d)
        except PrivacyConditionError:
            rdp = math.nan
        ma = accountant.ma_epsilon(q, n_d, delta, float(sigma))
        rows.append((float(sigma), rdp, ma, rdp / ma))
    write_csv(os.path.join(out, "compare.csv"), COMPARE_HEADER, rows)
    star = accountant.rdp_ma_crossover(q, n_d, delta, delta_s)
    write_csv(os.path.join(out, "crossover.csv"), CROSSOVER_HEADER, [(q, n_d, delta, delta_s, star)])
    log.info("crossover sigma* = %.6g", star)
    return EXIT_OK


# ---------------------------------------------------------------- train

def _summary(report: trainer.TrainReport, cfg: ExperimentConfig) -> str:
    budget = cfg["privacy.epsilon_total"]
    lines = [
        f"halt_reason={report.halt_reason}",
        f"iterations={report.iterations}",
        f"sigma0={fmt(report.sigma0)}",
        f"q={fmt(report.q)}",
        f"epsilon_spent={fmt(report.ledger.spent)}",
        f"epsilon_total={fmt(math.inf if budget is None else budget)}",
    ]
    return "\n".join(lines) + "\n"


def _write_report(report, cfg, out):
    write_text(os.path.join(out, "report.csv"), report.to_csv())
    nn.save(report.generator, os.path.join(out, "generator.bin"))
    nn.save(report.discriminator, os.path.join(out, "discriminator.bin"))
    write_text(os.path.join(out, "summary.txt"), _summary(report, cfg))


def cmd_train(cfg: ExperimentConfig, out: str) -> int:
    train, _, schema = load_data(cfg)
    config = cfg.train_config(schema)
    scorer = make_scorer(cfg, train, schema) if config.schedule.kind == "ant" else None
    try:
        report = trainer.train(config, train, scorer)
    except TrainingDivergenceError as exc:
        _write_report(exc.report, cfg, out)
        log.error("training diverged: %s", exc)
        return EXIT_DIVERGED
    _write_report(report, cfg, out)
    log.info("%s after %d iterations (sigma0=%.6g, spent %.6g)", report.halt_reason,
             report.iterations, report.sigma0, report.ledger.spent)
    return EXIT_OK


# ---------------------------------------------------------------- eval

def _epsilon_total(cfg: ExperimentConfig, q: float) -> float:
    privacy = cfg.privacy()
    if privacy is None:
        return math.inf
    if privacy.epsilon_total is not None:
        return privacy.epsilon_total
    params = accountant.MechanismParams(q, privacy.delta_s, privacy.sigma, privacy.delta)
    try:
        return cfg["train.n_g"] * accountant.generator_epsilon(params, cfg["train.n_d"],
                                                               privacy.alpha or 2.0)
    except PrivacyConditionError:
        return math.inf


def pmf_pairs(real, synthetic):
    """``(real PMF, synthetic PMF)`` for every attribute of a tabular schema."""
    return [(ev.pmf_of_attribute(real, a), ev.pmf_of_attribute(synthetic, a))
            for a in real.schema.names]


def comparison_tables(pairs, epsilon_total):
    """Rows for the PMF table and the per-attribute error table."""
    pmf_rows, err_rows = [], []
    for real_pmf, fake_pmf in pairs:
        for i, (label, pr, ps) in enumerate(zip(real_pmf.labels, real_pmf.probs, fake_pmf.probs), 1):
            pmf_rows.append((real_pmf.attribute, i, label, pr, ps))
        err_rows.append((real_pmf.attribute, ev.abs_avg_error(fake_pmf, real_pmf),
                         ev.l1_error(fake_pmf, real_pmf), epsilon_total))
    return pmf_rows, err_rows


def cmd_eval(cfg: ExperimentConfig, out: str) -> int:
    train, test, schema = load_data(cfg)
    path = cfg["eval.checkpoint"] or os.path.join(out, "generator.bin")
    if not os.path.isfile(path):
        raise ConfigError(f"no generator checkpoint at {path!r}; run train first or set eval.checkpoint")
    g_net = nn.load(path)
    width = 2 if schema is None else schema.width
    if g_net.output_dim != width:
        raise ConfigError(f"checkpoint produces {g_net.output_dim} columns, the data has {width}")
    eps = _epsilon_total(cfg, cfg["train.m"] / len(train))
    sample_path = SeedPath(cfg.seed, 0, 0, rngmod.SCORING)
    count = cfg["eval.samples"]
    if schema is None:
        fake = trainer.sample_generator(g_net, count, sample_path)
        pairs = [(ev.histogram_pmf_2d(train, cfg["eval.bins"], cfg["eval.extent"]),
                  ev.histogram_pmf_2d(fake, cfg["eval.bins"], cfg["eval.extent"]))]
    else:
        fake = trainer.generate_tabular(g_net, schema, count, sample_path)
        pairs = pmf_pairs(train, fake)
    pmf_rows, err_rows = comparison_tables(pairs, eps)
    write_csv(os.path.join(out, "pmf.csv"), PMF_HEADER, pmf_rows)
    write_csv(os.path.join(out, "errors.csv"), ERRORS_HEADER, err_rows)
    if schema is not None:
        acc_rows = [("real_to_synthetic",
                     ev.utility_accuracy(real_classifier(cfg, train), fake.features(), fake.labels),
                     ev.majority_accuracy(fake.labels))]
        if len(np.unique(fake.labels)) > 1:
            synth_clf = ev.train_eval_classifier(fake.features(), fake.labels, seed=cfg.seed)
            acc = ev.utility_accuracy(synth_clf, test.features(), test.labels)
        else:
            log.warning("synthetic rows carry a single label; synthetic-trained classifier skipped")
            acc = math.nan
        acc_rows.append(("synthetic_to_real", acc, ev.majority_accuracy(test.labels)))
        write_csv(os.path.join(out, "accuracy.csv"), ACCURACY_HEADER, acc_rows)
    log.info("mean abs_avg_error %.6g over %d attributes", float(np.mean([r[1] for r in err_rows])),
             len(err_rows))
    return EXIT_OK


# ---------------------------------------------------------------- sweep

def _sweep_job(values: dict, kind: str, k: float):
    """Train one candidate; returns ``(iterations, final accuracy, halt reason)``."""
    cfg = ExperimentConfig(values)
    train, _, schema = load_data(cfg)
    config = cfg.train_config(schema, cfg.schedule(kind, k))
    scorer = make_scorer(cfg, train, schema)
    try:
        report = trainer.train(config, train, scorer)
    except TrainingDivergenceError:
        return 0, math.nan, trainer.HALT_DIVERGED
    return report.iterations, report.final_mean_score(), report.halt_reason


def _workers(jobs: int) -> int:
    cap = os.environ.get("RDPGAN_THREADS")
    limit = os.cpu_count() or 1
    if cap:
        try:
            limit = max(1, int(cap))
        except ValueError:
            raise ConfigError(f"RDPGAN_THREADS must be an integer, got {cap!r}") from None
    return max(1, min(limit, jobs))


def cmd_sweep(cfg: ExperimentConfig, out: str) -> int:
    kind = cfg["sweep.schedule"]
    if kind == "fixed":
        raise ConfigError("sweep.schedule must be a dynamic schedule")
    ks = list(dict.fromkeys(cfg["sweep.ks"]))
    jobs = [("fixed", 1.0)] if cfg["sweep.baseline"] else []
    jobs += [(kind, k) for k in ks]
    workers = _workers(len(jobs))
    if workers == 1:
        results = [_sweep_job(cfg.values, j, k) for j, k in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_sweep_job, [cfg.values] * len(jobs), *zip(*jobs)))
    rows = [(j, k, *res) for (j, k), res in zip(jobs, results)]
    write_csv(os.path.join(out, "sweep.csv"), SWEEP_HEADER, rows)
    accuracy = {k: acc for j, k, _, acc, _ in rows if j == kind}
    best_k, _ = select_decay_rate(ks, accuracy.__getitem__)
    write_text(os.path.join(out, "selected.txt"), f"schedule={kind}\nk={fmt(best_k)}\n")
    log.info("selected k=%s for %s", fmt(best_k), kind)
    return EXIT_OK


COMMANDS = {
    "account": cmd_account,
    "compare": cmd_compare,
    "train": cmd_train,
    "eval": cmd_eval,
    "sweep": cmd_sweep,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rdpgan", description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", required=True, help="key=value config file")
    parser.add_argument("--seed", type=int, help="override the config seed")
    parser.add_argument("--out", help="output directory (overrides the config)")
    parser.add_argument("--quiet", action="store_true", help="only report errors")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.ERROR if args.quiet else logging.INFO,
                        format="%(levelname)s %(message)s", stream=sys.stderr, force=True)
    try:
        cfg = load_config_file(args.config, args.seed, args.out)
        os.makedirs(cfg.out, exist_ok=True)
        return COMMANDS[args.command](cfg, cfg.out)
    except CalibrationError as exc:
        log.error("%s", exc)
        return EXIT_INFEASIBLE
    except PrivacyConditionError as exc:
        log.error("%s", exc)
        return EXIT_INFEASIBLE
    except SelectionError as exc:
        log.error("%s", exc)
        return EXIT_DIVERGED
    except (ConfigError, IngestionError, ValueError) as exc:
        log.error("%s", exc)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
