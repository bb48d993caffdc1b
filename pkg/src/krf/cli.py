"""``krf`` command line: a reproducible synthetic-to-metrics pipeline.

Every command reads one INI config (``--config``). Paths in the config are
relative to the config file's directory. Missing keys take the defaults in
``DEFAULTS``, so an empty config runs the whole pipeline::

    krf simulate --config run.ini
    krf preprocess --config run.ini
    krf train --config run.ini
    krf predict --config run.ini
    krf evaluate --config run.ini

Exit status is 0 on success, 1 on a validation or data error (one
``error: ...`` line on stderr) and 2 on a usage error.
"""

from __future__ import annotations

import argparse
import configparser
import os
import sys
import warnings
from dataclasses import fields

import numpy as np

from . import datagen, evaluation, forest, fusion, preprocess, tables, variogram
from .preprocess import CLASS_NAMES, FEATURES, GATE_FEATURES, Telemetry

COMMANDS = ("simulate", "preprocess", "fit-variogram", "train", "predict", "evaluate",
            "importance")

DEFAULTS = {
    "run": {"seed": "0"},
    "paths": {
        "telemetry": "telemetry.csv",
        "strata": "strata.csv",
        "truth": "truth.csv",
        "train": "train.csv",
        "test": "test.csv",
        "samples": "samples.csv",
        "scalar_variogram": "scalar_variogram.json",
        "variogram": "variogram.json",
        "forest": "forest.krf",
        "predictions": "predictions.csv",
        "metrics": "metrics.txt",
        "importance": "importance.csv",
    },
    "simulate": {"length": "1500.0", "ring_width": "1.5", "face_diameter": "6.28",
                 "nugget": "0.0", "psill": "1.0", "range": "30.0", "kind": "spherical",
                 "region": "A", "sharpness": "6.0", "records_per_ring": "4",
                 "sensor_noise": "0.5", "operator_noise": "0.02", "operator_corr": "0.5",
                 "nonworking_fraction": "0.02"},
    "preprocess": {"filter_nonworking": "true", "tukey": "true", "tukey_k": "1.5",
                   "label_from_strata": "false", "n_sections": "5", "test_sections": "4"},
    "variogram": {"lag_width": "1.5", "max_lag": "90.0", "kinds": "spherical,gaussian,exponential",
                  "alpha": "0.05"},
    "forest": {"n_trees": "171", "max_depth": "25", "min_samples_split": "2",
               "min_samples_leaf": "10", "m_try": "3", "n_jobs": "1"},
    "fusion": {"window": "10", "mode": "ordinary"},
    "importance": {"n_repeats": "10"},
}


class CliError(Exception):
    pass


# --------------------------------------------------------------------------
# configuration

class Config:
    def __init__(self, path, overrides=None):
        self.path = os.path.abspath(path)
        if not os.path.exists(self.path):
            raise CliError(f"config file not found: {path}")
        self.base = os.path.dirname(self.path)
        cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";",))
        cp.read_dict(DEFAULTS)
        try:
            with open(self.path, encoding="utf-8") as fh:
                cp.read_file(fh)
        except configparser.Error as e:
            raise CliError(f"bad config: {' '.join(str(e).split())}") from None
        for (section, key), value in (overrides or {}).items():
            cp.set(section, key, str(value))
        self.cp = cp

    def get(self, section, key):
        return self.cp.get(section, key)

    def float(self, section, key):
        try:
            return self.cp.getfloat(section, key)
        except ValueError:
            raise CliError(f"config [{section}] {key} must be a number") from None

    def int(self, section, key):
        try:
            return self.cp.getint(section, key)
        except ValueError:
            raise CliError(f"config [{section}] {key} must be an integer") from None

    def bool(self, section, key):
        try:
            return self.cp.getboolean(section, key)
        except ValueError:
            raise CliError(f"config [{section}] {key} must be true or false") from None

    def path_of(self, key):
        return os.path.join(self.base, self.get("paths", key))

    @property
    def seed(self) -> int:
        return self.int("run", "seed")

    def meta(self, **extra):
        m = {"seed": self.seed}
        m.update(extra)
        return m

    def tunnel_spec(self) -> datagen.TunnelSpec:
        kw = {}
        for f in fields(datagen.TunnelSpec):
            if f.name in ("palette", "neighbours", "seed") or not self.cp.has_option("simulate", f.name):
                continue
            if f.name in ("kind", "region"):
                kw[f.name] = self.get("simulate", f.name)
            elif f.name == "records_per_ring":
                kw[f.name] = self.int("simulate", f.name)
            else:
                kw[f.name] = self.float("simulate", f.name)
        return datagen.TunnelSpec(seed=self.seed, **kw)

    def hyperparams(self) -> forest.Hyperparams:
        return forest.Hyperparams(
            n_trees=self.int("forest", "n_trees"), max_depth=self.int("forest", "max_depth"),
            min_samples_split=self.int("forest", "min_samples_split"),
            min_samples_leaf=self.int("forest", "min_samples_leaf"),
            m_try=self.int("forest", "m_try"), seed=self.seed)

    def kinds(self):
        return tuple(k.strip() for k in self.get("variogram", "kinds").split(",") if k.strip())

    def mode(self):
        return self.get("fusion", "mode").replace("-", "_")


def _need(path, what):
    if not os.path.exists(path):
        raise CliError(f"missing {what}: {path}")
    return path


# --------------------------------------------------------------------------
# commands

def cmd_simulate(cfg: Config):
    tun = datagen.generate_tunnel(cfg.tunnel_spec())
    meta = cfg.meta()
    tables.write_telemetry(cfg.path_of("telemetry"), tun.telemetry, meta)
    tables.write_table(cfg.path_of("strata"), tables.STRATA_COLUMNS,
                       [(x, CLASS_NAMES[c], t) for x, c, t in tun.strata()], meta)
    tables.write_table(cfg.path_of("truth"),
                       ("chainage_m",) + tables.LABEL_COLUMNS + ("main_class",),
                       [(x, *g, CLASS_NAMES[int(np.argmax(g))])
                        for x, g in zip(tun.ring_start, tun.ground)], meta)


def _strata_labels(cfg: Config, chainage):
    x, cls, thick = tables.read_strata(_need(cfg.path_of("strata"), "strata table"))
    d = cfg.float("simulate", "face_diameter")
    starts = np.unique(x)
    vecs = [preprocess.encode_ground(list(zip(cls[x == s], thick[x == s])), d).as_array()
            for s in starts]
    return preprocess.label_records(chainage, starts, np.array(vecs))


def cmd_preprocess(cfg: Config):
    tel = tables.read_telemetry(_need(cfg.path_of("telemetry"), "telemetry table"))
    tel.check_order()
    if cfg.bool("preprocess", "label_from_strata") or tel.labels is None:
        tel = Telemetry(tel.chainage, tel.timestamp, tel.X, _strata_labels(cfg, tel.chainage))
    n_raw = len(tel)
    if cfg.bool("preprocess", "filter_nonworking"):
        tel = preprocess.filter_nonworking(tel)
    n_working = len(tel)
    if cfg.bool("preprocess", "tukey"):
        cols = [FEATURES.index(f) for f in GATE_FEATURES]
        tel = tel.select(preprocess.tukey_mask(tel.X, cols, cfg.float("preprocess", "tukey_k")))
    known = np.any(tel.labels != 0, axis=1)
    tel = tel.select(known)
    if len(tel) < 2:
        raise CliError("fewer than 2 records survive preprocessing")
    test_sections = [int(s) for s in cfg.get("preprocess", "test_sections").split(",") if s.strip()]
    test = datagen.section_split(tel.chainage, cfg.int("preprocess", "n_sections"), test_sections)
    meta = cfg.meta(records_raw=n_raw, records_working=n_working, records_kept=len(tel))
    tables.write_telemetry(cfg.path_of("train"), tel.select(~test), meta)
    tables.write_telemetry(cfg.path_of("test"), tel.select(test), meta)
    train = tel.select(~test)
    tables.write_table(cfg.path_of("samples"), ("chainage_m", "value"),
                       zip(train.chainage, datagen.strength_index(train.labels)), meta)


def _fit_bins(cfg: Config, x, z):
    max_lag = cfg.get("variogram", "max_lag").strip()
    max_lag = float(max_lag) if max_lag else None
    bins = variogram.empirical_semivariogram(x, z, cfg.float("variogram", "lag_width"), max_lag)
    return bins, variogram.fit_model(bins, cfg.kinds(), max_lag)


def cmd_fit_variogram(cfg: Config):
    x, v = tables.read_samples(_need(cfg.path_of("samples"), "samples table"))
    keep = preprocess.three_sigma_filter(v)
    mask = np.isin(v, keep) if len(keep) != len(v) else np.ones(len(v), dtype=bool)
    x, v = x[mask], v[mask]
    v_t, transform = preprocess.normalize_for_kriging(v, cfg.float("variogram", "alpha"))
    bins, model = _fit_bins(cfg, x, v_t)
    tables.atomic_write(cfg.path_of("scalar_variogram"),
                        variogram.model_to_text(model, bins, transform, {"seed": cfg.seed}))


def cmd_train(cfg: Config):
    tel = tables.read_telemetry(_need(cfg.path_of("train"), "training table"), require_labels=True)
    if len(tel) < 2:
        raise CliError("training table needs at least 2 records")
    hp = cfg.hyperparams()
    f = forest.fit_forest(tel.X, tel.labels, hp, n_jobs=cfg.int("forest", "n_jobs"))
    order = np.argsort(tel.chainage, kind="stable")
    bins, model = _fit_bins(cfg, tel.chainage[order], tel.labels[order])
    tables.atomic_write(cfg.path_of("forest"), forest.forest_to_bytes(f))
    tables.atomic_write(cfg.path_of("variogram"),
                        variogram.model_to_text(model, bins, None, {"seed": cfg.seed}))


def _load_models(cfg: Config):
    fpath = _need(cfg.path_of("forest"), "trained model file")
    vpath = _need(cfg.path_of("variogram"), "variogram model file")
    with open(fpath, "rb") as fh:
        f = forest.forest_from_bytes(fh.read())
    with open(vpath, encoding="utf-8") as fh:
        vm = variogram.model_from_text(fh.read())
    return f, vm


def cmd_predict(cfg: Config):
    f, vm = _load_models(cfg)
    tel = tables.read_telemetry(_need(cfg.path_of("test"), "telemetry table"))
    fc = fusion.FusionConfig(vm, cfg.int("fusion", "window"), cfg.mode())
    preds = fusion.run_krf(tel.chainage, tel.X, f, fc)
    rows = []
    for p in preds:
        rows.append((p.chainage, CLASS_NAMES[p.main], *p.fused, float(np.mean(p.w_kriging)),
                     float(np.mean(p.var_kriging)), float(np.mean(p.var_rf))))
    tables.write_table(cfg.path_of("predictions"), tables.PREDICTION_COLUMNS, rows,
                       cfg.meta(mode=fc.mode, window=fc.window))


def _curve_block(name, columns, arrays):
    lines = [f"[{name}]", ",".join(columns)]
    lines += [",".join(tables.fmt(v) for v in row) for row in zip(*arrays)]
    return lines


def cmd_evaluate(cfg: Config):
    pred, _ = tables.read_predictions(_need(cfg.path_of("predictions"), "prediction table"))
    tel = tables.read_telemetry(_need(cfg.path_of("test"), "telemetry table"), require_labels=True)
    if len(tel) != len(pred["chainage_m"]) or np.any(tel.chainage != pred["chainage_m"]):
        raise CliError("prediction table does not match the test table")
    actual = preprocess.main_classes(tel.labels)
    scores = np.column_stack([pred[c] for c in tables.LABEL_COLUMNS])
    predicted = np.array([CLASS_NAMES.index(c) for c in pred["main_class"]])
    rep = evaluation.classification_metrics(actual, predicted)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        per_auc, macro_auc = evaluation.roc_auc(scores, actual)
    ap = evaluation.pr_auc(scores, actual)

    out = [f"# seed = {cfg.seed}", "[scalars]",
           f"n_samples = {len(actual)}",
           f"accuracy = {rep.accuracy!r}",
           f"f1_macro = {rep.macro_f1!r}",
           f"roc_auc_macro = {macro_auc!r}",
           f"pr_auc_micro = {ap!r}",
           "", "[per_class]", "class,support,precision,recall,f1,roc_auc"]
    for c, name in enumerate(CLASS_NAMES):
        out.append(",".join([name, str(int(rep.confusion[c].sum()))] +
                            [tables.fmt(v) for v in (rep.precision[c], rep.recall[c], rep.f1[c],
                                                     per_auc[c])]))
    out += ["", "[confusion]", "actual\\predicted," + ",".join(CLASS_NAMES)]
    out += [CLASS_NAMES[c] + "," + ",".join(str(int(v)) for v in rep.confusion[c])
            for c in range(len(CLASS_NAMES))]
    for c, name in enumerate(CLASS_NAMES):
        pos = actual == c
        if pos.any() and not pos.all():
            thr, fpr, tpr = evaluation.roc_curve(scores[:, c], pos)
            out += [""] + _curve_block(f"roc_{name}", ("threshold", "fpr", "tpr"), (thr, fpr, tpr))
    ind = evaluation.micro_indicator(actual, scores.shape[1])
    thr, rec, prec = evaluation.pr_curve(scores.ravel(), ind.ravel())
    out += [""] + _curve_block("pr_micro", ("threshold", "recall", "precision"), (thr, rec, prec))
    tables.atomic_write(cfg.path_of("metrics"), "\n".join(out) + "\n")


def cmd_importance(cfg: Config):
    f, _ = _load_models(cfg)
    tel = tables.read_telemetry(_need(cfg.path_of("test"), "telemetry table"), require_labels=True)
    imp = evaluation.permutation_importance(f, tel.X, tel.labels, cfg.seed,
                                            cfg.int("importance", "n_repeats"))
    tables.write_table(cfg.path_of("importance"), ("feature", "importance"),
                       zip(f.features, imp), cfg.meta())


HANDLERS = {
    "simulate": cmd_simulate, "preprocess": cmd_preprocess, "fit-variogram": cmd_fit_variogram,
    "train": cmd_train, "predict": cmd_predict, "evaluate": cmd_evaluate,
    "importance": cmd_importance,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="krf", description="Kriging + random-forest ground prediction.")
    sub = p.add_subparsers(dest="command", metavar="{" + "|".join(COMMANDS) + "}")
    sub.required = True
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, help="INI configuration file")
        sp.add_argument("--seed", type=int, help="override [run] seed")
        sp.add_argument("--mode", choices=("paper-literal", "ordinary"),
                        help="override [fusion] mode")
        sp.add_argument("--window", type=int, help="override [fusion] window")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    overrides = {}
    if args.seed is not None:
        overrides[("run", "seed")] = args.seed
    if args.mode is not None:
        overrides[("fusion", "mode")] = args.mode
    if args.window is not None:
        overrides[("fusion", "window")] = args.window
    try:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            HANDLERS[args.command](Config(args.config, overrides))
        for w in caught:
            print(f"warning: {w.message}", file=sys.stderr)
    except (CliError, ValueError, FileNotFoundError, OSError) as e:
        msg = " ".join(str(e).split()) or type(e).__name__
        if isinstance(e, FileNotFoundError) and e.filename:
            msg = f"missing file: {e.filename}"
        print(f"error: {msg}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
