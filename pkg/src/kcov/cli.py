"""Batch command-line surface for the descriptor pipeline.

Subcommands: ``extract`` (dataset -> descriptor file), ``gram`` (descriptor
file -> Gram report), ``train`` / ``eval`` (SVM model and metrics), ``cv``
(grid cross-validation), ``selfcheck`` (invariant suite) and ``bench``
(descriptor cost envelope).  Flags override config-file fields, which
override defaults; the effective configuration is echoed into every
output's provenance block.  Commands are deterministic given (config,
seed) and never leave partial primary outputs behind; ``bench`` reports
wall-clock measurements, which naturally vary between runs.

Exit codes: 0 success, 1 failed self-check, 2 configuration error,
3 dataset error, 4 model/descriptor provenance mismatch.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import bench as bench_mod
from . import covariance, datasets, reports, selfcheck, svm
from .covariance import Kernel, kernel_by_name
from .errors import (
    KcovError,
    MalformedFileError,
    SchemaError,
    TooShortError,
    UnknownSubjectError,
    UnusableTrialError,
)
from .features import FeatureConfig, assemble_trial_matrix, clean_missing
from .svm import PipelineProvenance

THREADS_ENV = "KCOV_THREADS"


class ConfigError(KcovError):
    exit_code = 2


class DatasetError(KcovError):
    exit_code = 3


class ProvenanceMismatchError(KcovError):
    exit_code = 4


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

_DEFAULTS = dict(
    dataset_profile=None,
    input=None,
    format="canonical",
    features="pos,vel,acc",
    normalize="center-scale",
    kernel="expdot",
    sigma=1.0,
    degree=2,
    offset=0.0,
    probes=0,  # 0 = use the full data dimension
    eps_scale=covariance.DEFAULT_EPS_SCALE,
    gamma=1.0,
    svm_c=10.0,
    seed=0,
    threads=0,  # 0 = KCOV_THREADS env var, else 1
    out=None,
    cv_sigma_grid=list(svm.DEFAULT_SIGMA_GRID),
    cv_gamma_grid=list(svm.DEFAULT_GAMMA_GRID),
    cv_c_grid=list(svm.DEFAULT_C_GRID),
    cv_folds=svm.DEFAULT_FOLDS,
    bench_frames=256,
    bench_runs=20,
)

_CONFIG_SECTIONS = {"cv": ("sigma_grid", "gamma_grid", "c_grid", "folds"),
                    "bench": ("frames", "runs")}


@dataclass(frozen=True)
class RunConfig:
    dataset_profile: Optional[str]
    input: Optional[str]
    format: str
    features: str
    normalize: str
    kernel: str
    sigma: float
    degree: int
    offset: float
    probes: int
    eps_scale: float
    gamma: float
    svm_c: float
    seed: int
    threads: int
    out: Optional[str]
    cv_sigma_grid: list
    cv_gamma_grid: list
    cv_c_grid: list
    cv_folds: int
    bench_frames: int
    bench_runs: int

    def make_kernel(self) -> Kernel:
        try:
            return kernel_by_name(
                self.kernel, sigma=self.sigma, degree=self.degree, offset=self.offset
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def feature_flags(self) -> tuple[bool, bool]:
        parts = [p for p in self.features.split(",") if p]
        bad = set(parts) - {"pos", "vel", "acc"}
        if bad:
            raise ConfigError(f"unknown feature blocks {sorted(bad)}; use pos,vel,acc")
        if "pos" not in parts:
            raise ConfigError("feature list must include 'pos'")
        return "vel" in parts, "acc" in parts

    def effective_threads(self) -> int:
        if self.threads > 0:
            return self.threads
        env = os.environ.get(THREADS_ENV, "")
        if env.strip():
            try:
                value = int(env)
            except ValueError:
                raise ConfigError(f"{THREADS_ENV}={env!r} is not an integer")
            if value > 0:
                return value
        return 1

    def provenance_pairs(self) -> list[tuple[str, object]]:
        """The config echo embedded in every report."""
        return [
            ("config.format", self.format),
            ("config.features", self.features),
            ("config.normalize", self.normalize),
            ("config.kernel", self.kernel),
            ("config.sigma", float(self.sigma)),
            ("config.degree", int(self.degree)),
            ("config.offset", float(self.offset)),
            ("config.probes", int(self.probes)),
            ("config.eps_scale", float(self.eps_scale)),
            ("config.gamma", float(self.gamma)),
            ("config.svm_c", float(self.svm_c)),
            ("config.seed", int(self.seed)),
        ]


def _load_config_file(path) -> dict:
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"config file {path} must hold a JSON object")
    merged = {}
    for key, value in raw.items():
        if key in _CONFIG_SECTIONS:
            if not isinstance(value, dict):
                raise ConfigError(f"config section {key!r} must be an object")
            for sub, subval in value.items():
                if sub not in _CONFIG_SECTIONS[key]:
                    raise ConfigError(f"unknown config key {key}.{sub}")
                merged[f"{key}_{sub}"] = subval
        elif key in _DEFAULTS:
            merged[key] = value
        else:
            raise ConfigError(f"unknown config key {key!r}")
    return merged


def build_config(args: argparse.Namespace) -> RunConfig:
    values = dict(_DEFAULTS)
    if getattr(args, "config", None):
        values.update(_load_config_file(args.config))
    for key in _DEFAULTS:
        flag = getattr(args, key, None)
        if flag is not None:
            values[key] = flag
    try:
        return RunConfig(**values)
    except TypeError as exc:
        raise ConfigError(f"bad configuration: {exc}") from exc


# ---------------------------------------------------------------------------
# dataset plumbing
# ---------------------------------------------------------------------------


def _require(cfg: RunConfig, *fields: str) -> None:
    for name in fields:
        if getattr(cfg, name) in (None, ""):
            flag = name.replace("_", "-")
            raise ConfigError(f"--{flag} is required for this command")


def _load_dataset(cfg: RunConfig):
    profile = _load_profile(cfg)
    path = Path(cfg.input)
    if not path.exists():
        raise DatasetError(f"input path {cfg.input} does not exist")
    try:
        if cfg.format == "msr3d":
            trials, rejected = datasets.load_msr3d(path)
        elif cfg.format == "canonical":
            trials, rejected = datasets.load_canonical(path), []
        else:
            raise ConfigError(f"unknown format {cfg.format!r} (msr3d or canonical)")
        index = datasets.apply_split(
            datasets.build_trial_index(trials, rejected), profile
        )
    except (MalformedFileError, SchemaError, UnknownSubjectError) as exc:
        raise DatasetError(str(exc)) from exc
    if not trials:
        raise DatasetError(f"no usable trials found under {cfg.input}")
    trials = sorted(trials, key=lambda t: t.trial_id)
    return profile, trials, index


def _load_profile(cfg: RunConfig) -> datasets.DatasetProfile:
    _require(cfg, "dataset_profile")
    if not Path(cfg.dataset_profile).exists():
        raise ConfigError(f"dataset profile {cfg.dataset_profile} does not exist")
    try:
        return datasets.load_profile(cfg.dataset_profile)
    except SchemaError as exc:
        raise ConfigError(str(exc)) from exc


def _feature_config(cfg: RunConfig, profile: datasets.DatasetProfile) -> FeatureConfig:
    vel, acc = cfg.feature_flags()
    try:
        return FeatureConfig(
            use_velocity=vel,
            use_acceleration=acc,
            normalization=cfg.normalize,
            root_joint_index=profile.root_joint_index,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


# ---------------------------------------------------------------------------
# sidecar metadata ("<out>.meta"): effective config + per-trial assignments,
# the companion the train/eval commands use to recover the split and audit
# provenance.  The descriptor container itself stores only per-trial data.
# ---------------------------------------------------------------------------


def _meta_path(descriptor_path) -> Path:
    return Path(str(descriptor_path) + ".meta")


def _render_meta(cfg: RunConfig, profile, entries) -> str:
    """Build the sidecar text; validates ids before any file is written."""
    pairs: list[tuple[str, object]] = [("report", "extract-meta")]
    pairs.extend(cfg.provenance_pairs())
    pairs.append(("config.root_joint_index", profile.root_joint_index))
    pairs.append(("profile.name", profile.name))
    counts = {datasets.TRAIN: 0, datasets.TEST: 0, datasets.REJECTED: 0}
    for entry in entries:
        counts[entry.assignment] += 1
    pairs.append(("count.train", counts[datasets.TRAIN]))
    pairs.append(("count.test", counts[datasets.TEST]))
    pairs.append(("count.rejected", counts[datasets.REJECTED]))
    for entry in sorted(entries, key=lambda e: e.trial_id):
        if "\n" in entry.trial_id or "=" in entry.trial_id:
            raise DatasetError(
                f"trial id {entry.trial_id!r} cannot be stored in the "
                "line-oriented sidecar (contains '=' or a newline)"
            )
        pairs.append(
            (
                f"trial.{entry.trial_id}",
                f"{entry.assignment},{entry.subject_id},{entry.label},"
                f"{entry.frame_count}",
            )
        )
    return reports.render_report(pairs)


@dataclass(frozen=True)
class MetaInfo:
    fields: dict
    assignments: dict  # trial_id -> (assignment, subject_id, label, frames)

    def provenance(self) -> PipelineProvenance:
        f = self.fields
        kernel = kernel_by_name(
            f["config.kernel"],
            sigma=float(f["config.sigma"]),
            degree=int(f["config.degree"]),
            offset=float(f["config.offset"]),
        )
        vel = "vel" in f["config.features"]
        acc = "acc" in f["config.features"]
        return PipelineProvenance(
            kernel=kernel,
            eps_scale=float(f["config.eps_scale"]),
            probes=int(f["config.probes"]),
            feature_config=FeatureConfig(
                use_velocity=vel,
                use_acceleration=acc,
                normalization=f["config.normalize"],
                root_joint_index=int(f["config.root_joint_index"]),
            ),
        )


def _read_meta(descriptor_path) -> MetaInfo:
    path = _meta_path(descriptor_path)
    if not path.exists():
        raise DatasetError(
            f"missing sidecar {path}; run `kcov extract` to produce the "
            "descriptor file together with its split metadata"
        )
    try:
        fields = reports.read_report(path)
        assignments = {}
        for key, value in fields.items():
            if key.startswith("trial."):
                assignment, subject, label, frames = value.split(",")
                assignments[key[len("trial."):]] = (
                    assignment,
                    int(subject),
                    int(label),
                    int(frames),
                )
        meta = MetaInfo(fields=fields, assignments=assignments)
        meta.provenance()  # validate the config echo is complete
    except (ValueError, KeyError) as exc:
        raise DatasetError(f"sidecar {path} is malformed: {exc}") from exc
    return meta


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_extract(args) -> int:
    cfg = build_config(args)
    _require(cfg, "input", "out")
    profile, trials, index = _load_dataset(cfg)
    feature_cfg = _feature_config(cfg, profile)
    kernel = cfg.make_kernel()
    probes = cfg.probes if cfg.probes > 0 else None
    entries = {e.trial_id: e for e in index.entries}

    def build(trial):
        try:
            cleaned = clean_missing(trial)
            matrix = assemble_trial_matrix(cleaned, feature_cfg)
        except (UnusableTrialError, TooShortError) as exc:
            return trial.trial_id, str(exc)
        desc = covariance.kernelized_covariance(kernel, matrix, probes)
        return trial.trial_id, covariance.regularize_and_log(desc, cfg.eps_scale)

    todo = [t for t in trials if entries[t.trial_id].assignment != datasets.REJECTED]
    threads = cfg.effective_threads()
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            built = list(pool.map(build, todo))
    else:
        built = [build(t) for t in todo]

    descriptors = []
    for trial_id, result in built:
        if isinstance(result, str):
            entries[trial_id] = dataclasses.replace(
                entries[trial_id], assignment=datasets.REJECTED, reason=result
            )
            print(f"rejected {trial_id}: {result}", file=sys.stderr)
        else:
            descriptors.append(result)
    if not descriptors:
        raise DatasetError("every trial was rejected; nothing to write")

    final_entries = sorted(entries.values(), key=lambda e: e.trial_id)
    meta_text = _render_meta(cfg, profile, final_entries)
    out = Path(cfg.out)
    tmp = out.with_name(out.name + f".tmp-{os.getpid()}")
    try:
        covariance.save_descriptors(tmp, descriptors)
        os.replace(tmp, out)
    finally:
        if tmp.exists():
            tmp.unlink()
    reports.atomic_write_text(_meta_path(out), meta_text)
    counts = {
        side: sum(e.assignment == side for e in final_entries)
        for side in (datasets.TRAIN, datasets.TEST, datasets.REJECTED)
    }
    print(
        f"wrote {len(descriptors)} descriptors to {out} "
        f"(train {counts['train']}, test {counts['test']}, "
        f"rejected {counts['rejected']})"
    )
    return 0


def _load_descriptor_file(path):
    if not Path(path).exists():
        raise DatasetError(f"descriptor file {path} does not exist")
    try:
        descs = covariance.load_descriptors(path)
    except MalformedFileError as exc:
        raise DatasetError(str(exc)) from exc
    if not descs:
        raise DatasetError(f"descriptor file {path} holds no records")
    return descs


def _record_kernel(descs) -> Kernel:
    kernel = descs[0].kernel
    for d in descs[1:]:
        if d.kernel != kernel:
            raise DatasetError("descriptor file mixes kernels; re-extract")
    return kernel


def cmd_gram(args) -> int:
    cfg = build_config(args)
    _require(cfg, "input")
    descs = _load_descriptor_file(cfg.input)
    gram = svm.log_euclidean_gram(descs, cfg.gamma)
    print(f"assembled {len(descs)}x{len(descs)} Gram matrix (gamma={cfg.gamma:g})")
    if cfg.out:
        pairs: list[tuple[str, object]] = [("report", "gram")]
        pairs.extend(cfg.provenance_pairs())
        pairs.append(("n_trials", len(descs)))
        pairs.append(("ids", ",".join(gram.ids)))
        for k, row in enumerate(gram.values):
            pairs.append((f"row.{k}", ",".join(repr(float(v)) for v in row)))
        reports.write_report(cfg.out, pairs)
        reports.gram_figure(
            gram.values, _figure_path(cfg.out, "heatmap"),
            title=f"log-Euclidean Gram (gamma={cfg.gamma:g})",
        )
        print(f"wrote {cfg.out} and {_figure_path(cfg.out, 'heatmap')}")
    return 0


def _split_descriptors(descs, meta: MetaInfo):
    train, test = [], []
    for desc in descs:
        info = meta.assignments.get(desc.trial_id)
        if info is None:
            raise DatasetError(
                f"trial {desc.trial_id!r} missing from the sidecar metadata"
            )
        if info[0] == datasets.TRAIN:
            train.append(desc)
        elif info[0] == datasets.TEST:
            test.append(desc)
    if not train or not test:
        raise DatasetError(
            f"split needs both sides: {len(train)} train / {len(test)} test"
        )
    return train, test


def cmd_train(args) -> int:
    cfg = build_config(args)
    _require(cfg, "input", "out")
    descs = _load_descriptor_file(cfg.input)
    meta = _read_meta(cfg.input)
    train, test = _split_descriptors(descs, meta)
    provenance = dataclasses.replace(meta.provenance(), kernel=_record_kernel(descs))
    labels = [d.label for d in train]
    gram = svm.log_euclidean_gram(train, cfg.gamma, provenance)
    try:
        model = svm.svm_train(gram, labels, cfg.svm_c)
    except KcovError as exc:
        raise DatasetError(f"cannot train on this split: {exc}") from exc
    out = Path(cfg.out)
    tmp = out.with_name(out.name + f".tmp-{os.getpid()}")
    try:
        svm.save_model(tmp, model)
        os.replace(tmp, out)
    finally:
        if tmp.exists():
            tmp.unlink()
    supports = sum(m.support.size for m in model.machines)
    print(
        f"trained {len(model.machines)} one-vs-one machines over "
        f"{len(train)} trials ({len(model.classes)} classes, "
        f"{supports} supports); wrote {out}"
    )
    return 0


def _check_provenance(model: svm.SvmModel, descs, meta: MetaInfo,
                      cfg: RunConfig, args) -> None:
    record_kernel = _record_kernel(descs)
    prov = model.provenance
    if prov is None:
        raise ProvenanceMismatchError("model carries no provenance block")
    if prov.kernel != record_kernel:
        raise ProvenanceMismatchError(
            f"model kernel {prov.kernel} != descriptor kernel {record_kernel}"
        )
    meta_prov = meta.provenance()
    for field_name in ("eps_scale", "probes", "feature_config"):
        if getattr(meta_prov, field_name) != getattr(prov, field_name):
            raise ProvenanceMismatchError(
                f"descriptor {field_name} {getattr(meta_prov, field_name)} != "
                f"model {field_name} {getattr(prov, field_name)}"
            )
    if getattr(args, "gamma", None) is not None and cfg.gamma != model.gamma:
        raise ProvenanceMismatchError(
            f"requested gamma {cfg.gamma:g} != model gamma {model.gamma:g}"
        )


def cmd_eval(args) -> int:
    cfg = build_config(args)
    _require(cfg, "input")
    if not Path(args.model).exists():
        raise DatasetError(f"model file {args.model} does not exist")
    try:
        model = svm.load_model(args.model)
    except MalformedFileError as exc:
        raise DatasetError(str(exc)) from exc
    descs = _load_descriptor_file(cfg.input)
    meta = _read_meta(cfg.input)
    _check_provenance(model, descs, meta, cfg, args)
    train_by_id = {d.trial_id: d for d in descs}
    try:
        train = [train_by_id[t] for t in model.training_ids]
    except KeyError as exc:
        raise DatasetError(f"model training trial {exc} missing from {cfg.input}")
    _, test = _split_descriptors(descs, meta)
    rows = svm.gram_rows_between(test, train, model.gamma)
    predicted = svm.svm_predict(model, rows)
    truth = np.asarray([d.label for d in test])
    classes = sorted(set(truth.tolist()) | set(model.classes))
    pos = {c: k for k, c in enumerate(classes)}
    confusion = np.zeros((len(classes), len(classes)), dtype=np.int64)
    for t, p in zip(truth, predicted):
        confusion[pos[int(t)], pos[int(p)]] += 1
    accuracy = float((predicted == truth).mean())

    print(f"test accuracy {accuracy:.4f} on {len(test)} trials")
    pairs: list[tuple[str, object]] = [("report", "eval")]
    pairs.extend(cfg.provenance_pairs())
    pairs.append(("descriptor.kernel", repr(_record_kernel(descs))))
    pairs.append(("model.gamma", float(model.gamma)))
    pairs.append(("n_train", len(train)))
    pairs.append(("n_test", len(test)))
    pairs.append(("accuracy", accuracy))
    for c in classes:
        mask = truth == c
        if mask.any():
            cls_acc = float((predicted[mask] == c).mean())
            pairs.append((f"class.{c}.accuracy", cls_acc))
            print(f"  class {c}: {cls_acc:.4f} ({int(mask.sum())} trials)")
    width = max(len(str(c)) for c in classes) + 2
    print("confusion matrix (rows true, columns predicted):")
    print(" " * (width + 1) + "".join(f"{c:>{width}}" for c in classes))
    for c in classes:
        row = "".join(f"{int(v):>{width}}" for v in confusion[pos[c]])
        print(f"{c:>{width}} {row}")
    pairs.append(("confusion.labels", ",".join(str(c) for c in classes)))
    for c in classes:
        row = confusion[pos[c]]
        pairs.append((f"confusion.{c}", ",".join(str(int(v)) for v in row)))
    if cfg.out:
        reports.write_report(cfg.out, pairs)
        reports.confusion_figure(classes, confusion, _figure_path(cfg.out, "confusion"))
        print(f"wrote {cfg.out} and {_figure_path(cfg.out, 'confusion')}")
    return 0


def cmd_cv(args) -> int:
    cfg = build_config(args)
    _require(cfg, "input")
    profile, trials, index = _load_dataset(cfg)
    feature_cfg = _feature_config(cfg, profile)
    assignments = {e.trial_id: e.assignment for e in index.entries}
    train_trials = []
    for trial in trials:
        if assignments[trial.trial_id] != datasets.TRAIN:
            continue
        try:
            train_trials.append(clean_missing(trial))
        except UnusableTrialError as exc:
            print(f"rejected {trial.trial_id}: {exc}", file=sys.stderr)
    if not train_trials:
        raise DatasetError("no usable training trials for cross-validation")
    kernel = cfg.make_kernel()
    probes = cfg.probes if cfg.probes > 0 else None
    try:
        folds = svm.make_subject_folds(train_trials, cfg.cv_folds)
        report = svm.cross_validate(
            train_trials,
            folds,
            feature_cfg,
            kernel,
            sigma_grid=cfg.cv_sigma_grid,
            gamma_grid=cfg.cv_gamma_grid,
            c_grid=cfg.cv_c_grid,
            probes=probes,
            eps_scale=cfg.eps_scale,
        )
    except KcovError as exc:
        raise DatasetError(str(exc)) from exc
    sel = report.selected
    sigma_txt = "n/a" if sel.sigma is None else f"{sel.sigma:g}"
    print(
        f"selected sigma={sigma_txt} gamma={sel.gamma:g} C={sel.c:g} "
        f"at mean accuracy {sel.mean_accuracy:.4f} "
        f"({len(report.folds)} folds, {len(report.cells)} cells)"
    )
    if cfg.out:
        pairs: list[tuple[str, object]] = [("report", "cv")]
        pairs.extend(cfg.provenance_pairs())
        pairs.append(("n_trials", len(train_trials)))
        pairs.append(("folds", len(report.folds)))
        for k, fold in enumerate(report.folds):
            pairs.append((f"fold.{k}", ",".join(fold)))
        grid_sigma = ",".join(
            "n/a" if s is None else repr(float(s)) for s in report.sigma_grid
        )
        pairs.append(("grid.sigma", grid_sigma))
        pairs.append(("grid.gamma", ",".join(repr(g) for g in report.gamma_grid)))
        pairs.append(("grid.c", ",".join(repr(c) for c in report.c_grid)))
        for cell in report.cells:
            key_sigma = "na" if cell.sigma is None else f"{cell.sigma:g}"
            pairs.append(
                (
                    f"cell.{key_sigma}.{cell.gamma:g}.{cell.c:g}",
                    cell.mean_accuracy,
                )
            )
        pairs.append(("selected.sigma", sigma_txt))
        pairs.append(("selected.gamma", float(sel.gamma)))
        pairs.append(("selected.c", float(sel.c)))
        pairs.append(("selected.accuracy", float(sel.mean_accuracy)))
        reports.write_report(cfg.out, pairs)
        reports.cv_grid_figure(report, _figure_path(cfg.out, "grid"))
        print(f"wrote {cfg.out} and {_figure_path(cfg.out, 'grid')}")
    return 0


def cmd_selfcheck(args) -> int:
    cfg = build_config(args)
    results = selfcheck.run_selfcheck(cfg.seed, inject_failure=args.inject_failure)
    failed = [r for r in results if not r.passed]
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'} {r.name}: {r.detail}")
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    if cfg.out:
        pairs: list[tuple[str, object]] = [("report", "selfcheck"),
                                           ("config.seed", cfg.seed)]
        for r in results:
            pairs.append((f"check.{r.name}", "pass" if r.passed else "fail"))
        pairs.append(("passed", len(results) - len(failed)))
        pairs.append(("failed", len(failed)))
        reports.write_report(cfg.out, pairs)
    return 1 if failed else 0


def cmd_bench(args) -> int:
    cfg = build_config(args)
    probes = cfg.probes if cfg.probes > 0 else 128
    result = bench_mod.complexity_check(
        kernel=cfg.make_kernel(),
        probes=probes,
        frames=cfg.bench_frames,
        runs=cfg.bench_runs,
        seed=cfg.seed,
    )
    print(
        f"descriptor at (m={result.probes}, T={result.frames}): "
        f"{result.base_seconds * 1e3:.3f} ms; at (2m, 2T): "
        f"{result.doubled_seconds * 1e3:.3f} ms; ratio {result.ratio:.2f} "
        f"(bound {bench_mod.RATIO_BOUND:g})"
    )
    if cfg.out:
        pairs: list[tuple[str, object]] = [("report", "bench")]
        pairs.extend(cfg.provenance_pairs())
        pairs.append(("probes", result.probes))
        pairs.append(("frames", result.frames))
        pairs.append(("runs", result.runs))
        pairs.append(("base_seconds", result.base_seconds))
        pairs.append(("doubled_seconds", result.doubled_seconds))
        pairs.append(("ratio", result.ratio))
        pairs.append(("within_bound", result.within_bound))
        reports.write_report(cfg.out, pairs)
        reports.bench_figure(
            [f"m={result.probes}\nT={result.frames}",
             f"m={2 * result.probes}\nT={2 * result.frames}"],
            [result.base_seconds, result.doubled_seconds],
            _figure_path(cfg.out, "times"),
        )
        print(f"wrote {cfg.out} and {_figure_path(cfg.out, 'times')}")
    return 0 if result.within_bound else 1


def _figure_path(out, tag: str) -> Path:
    out = Path(out)
    return out.with_name(out.stem + f".{tag}.png")


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON config file; flags override it")
    parser.add_argument("--dataset-profile", dest="dataset_profile",
                        help="dataset profile JSON (joints, root, split rule)")
    parser.add_argument("--input", help="input dataset dir/file or descriptor file")
    parser.add_argument("--format", choices=["msr3d", "canonical"],
                        help="input dataset format")
    parser.add_argument("--features", help="comma list from pos,vel,acc")
    parser.add_argument("--normalize", choices=["none", "center", "center-scale"],
                        help="coordinate normalization")
    parser.add_argument("--kernel", choices=["linear", "poly", "expdot"],
                        help="descriptor kernel")
    parser.add_argument("--sigma", type=float, help="exp-dot kernel bandwidth")
    parser.add_argument("--degree", type=int, help="polynomial kernel degree")
    parser.add_argument("--offset", type=float, help="polynomial kernel offset")
    parser.add_argument("--probes", type=int,
                        help="probe count m (0 = data dimension)")
    parser.add_argument("--eps-scale", dest="eps_scale", type=float,
                        help="log regularizer scale (epsilon = scale * trace/d)")
    parser.add_argument("--gamma", type=float, help="log-Euclidean kernel gamma")
    parser.add_argument("--svm-c", dest="svm_c", type=float,
                        help="SVM box constraint C")
    parser.add_argument("--seed", type=int, help="base random seed")
    parser.add_argument("--threads", type=int,
                        help=f"worker threads (fallback: ${THREADS_ENV})")
    parser.add_argument("--out", help="primary output path")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kcov",
        description="kernelized covariance descriptors and the SPD SVM pipeline",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", help="compute descriptors for a dataset")
    _add_common(p)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("gram", help="assemble a Gram matrix from descriptors")
    _add_common(p)
    p.set_defaults(func=cmd_gram)

    p = sub.add_parser("train", help="train the one-vs-one SVM on the train split")
    _add_common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a model on the test split")
    p.add_argument("model", help="KSVM1 model file from `kcov train`")
    _add_common(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("cv", help="grid cross-validation on the train split")
    _add_common(p)
    p.set_defaults(func=cmd_cv)

    p = sub.add_parser("selfcheck", help="run the module invariant suite")
    _add_common(p)
    p.add_argument("--inject-failure", action="store_true",
                   help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_selfcheck)

    p = sub.add_parser("bench", help="measure the descriptor cost envelope")
    _add_common(p)
    p.set_defaults(func=cmd_bench)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DatasetError as exc:
        print(f"dataset error: {exc}", file=sys.stderr)
        return 3
    except ProvenanceMismatchError as exc:
        print(f"provenance mismatch: {exc}", file=sys.stderr)
        return 4
    except KcovError as exc:
        # remaining library errors come from unusable parameter choices
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
