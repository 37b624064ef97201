"""Dataset ingestion and split bookkeeping.

Two input surfaces:

* the MSR-Action3D skeleton text format: one file per trial named
  ``aAA_sSS_eEE_skeleton3D.txt`` (action = label, subject, instance),
  containing whitespace-separated rows of ``x y z confidence``, 20 rows
  per frame, frames concatenated;

* a canonical JSON-lines trial format ("kcov-trials/1") that externally
  converted corpora are expected to produce: a header object followed by
  one record per trial.  Floats are written with 17 significant digits so
  write -> load round-trips every value bit-exactly.

Split rules are cross-subject: odd subject ids train / even test, or
explicit named subject lists; an optional class filter drops trials whose
label is not listed.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import math
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import (
    MalformedFileError,
    SchemaError,
    UnknownSubjectError,
)
from .features import SkeletonTrial

logger = logging.getLogger(__name__)

CANONICAL_FORMAT = "kcov-trials/1"
MSR3D_JOINTS = 20

_MSR3D_NAME = re.compile(r"^a(\d+)_s(\d+)_e(\d+)_skeleton3D\.txt$")

TRAIN, TEST, REJECTED = "train", "test", "rejected"


# ---------------------------------------------------------------------------
# profiles and the trial index
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SplitRule:
    """Either odd/even subject ids or explicit named subject lists."""

    kind: str  # "odd_even_subjects" | "named_subjects"
    train_subjects: tuple = ()
    test_subjects: tuple = ()

    def __post_init__(self):
        if self.kind not in ("odd_even_subjects", "named_subjects"):
            raise ValueError(f"unknown split rule {self.kind!r}")


@dataclass(frozen=True)
class DatasetProfile:
    name: str
    joint_count: int
    root_joint_index: int
    split_rule: SplitRule
    class_filter: Optional[tuple[int, ...]] = None
    # Named splits use human subject names; trials carry integer ids, so a
    # profile may ship the name -> id table its converter used.
    subject_names: Optional[dict] = None
    # Known-corrupted trials, listed in the profile rather than hardcoded.
    exclude_trials: tuple[str, ...] = ()


@dataclass(frozen=True)
class IndexEntry:
    trial_id: str
    label: int
    subject_id: int
    source: str
    frame_count: int
    assignment: str = ""  # train/test/rejected once a split is applied
    reason: str = ""


@dataclass(frozen=True)
class TrialIndex:
    entries: tuple[IndexEntry, ...] = ()

    def __post_init__(self):
        ids = [e.trial_id for e in self.entries]
        if len(ids) != len(set(ids)):
            raise ValueError("trial ids in an index must be unique")

    def subset(self, assignment: str) -> tuple[IndexEntry, ...]:
        return tuple(e for e in self.entries if e.assignment == assignment)


def build_trial_index(trials: Sequence[SkeletonTrial],
                      rejected: Sequence[tuple[str, str]] = ()) -> TrialIndex:
    """Index loaded trials plus loader rejections, sorted by trial id so the
    result does not depend on directory enumeration order."""
    entries = [
        IndexEntry(
            trial_id=t.trial_id,
            label=t.label,
            subject_id=t.subject_id,
            source="",
            frame_count=t.frame_count,
        )
        for t in trials
    ]
    entries.extend(
        IndexEntry(
            trial_id=name,
            label=-1,
            subject_id=-1,
            source=name,
            frame_count=0,
            assignment=REJECTED,
            reason=reason,
        )
        for name, reason in rejected
    )
    return TrialIndex(entries=tuple(sorted(entries, key=lambda e: e.trial_id)))


def _resolve_named(subject_id: int, names: Sequence, table: Optional[dict]) -> bool:
    for entry in names:
        if isinstance(entry, int) and entry == subject_id:
            return True
        if isinstance(entry, str):
            if table and table.get(entry) == subject_id:
                return True
            if entry == str(subject_id):
                return True
    return False


def apply_split(index: TrialIndex, profile: DatasetProfile) -> TrialIndex:
    """Assign every entry to train/test/rejected under the profile's rule."""
    rule = profile.split_rule
    out = []
    for entry in index.entries:
        if entry.assignment == REJECTED:
            out.append(entry)
            continue
        if entry.trial_id in profile.exclude_trials:
            out.append(
                dataclasses.replace(
                    entry, assignment=REJECTED, reason="listed in exclude_trials"
                )
            )
            continue
        if profile.class_filter is not None and entry.label not in profile.class_filter:
            out.append(
                dataclasses.replace(
                    entry, assignment=REJECTED, reason="label outside class filter"
                )
            )
            continue
        if rule.kind == "odd_even_subjects":
            side = TRAIN if entry.subject_id % 2 == 1 else TEST
        else:
            if _resolve_named(entry.subject_id, rule.train_subjects,
                              profile.subject_names):
                side = TRAIN
            elif _resolve_named(entry.subject_id, rule.test_subjects,
                                profile.subject_names):
                side = TEST
            else:
                raise UnknownSubjectError(
                    f"subject {entry.subject_id} of trial {entry.trial_id!r} "
                    "is in neither the train nor the test list"
                )
        out.append(dataclasses.replace(entry, assignment=side))
    return TrialIndex(entries=tuple(out))


def load_profile(path) -> DatasetProfile:
    """Read a dataset profile from its JSON config file."""
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise SchemaError(f"cannot read profile {path}: {exc}") from exc
    try:
        rule_raw = raw["split_rule"]
        rule = SplitRule(
            kind=rule_raw["kind"],
            train_subjects=tuple(rule_raw.get("train", ())),
            test_subjects=tuple(rule_raw.get("test", ())),
        )
        class_filter = raw.get("class_filter")
        return DatasetProfile(
            name=raw["name"],
            joint_count=int(raw["joint_count"]),
            root_joint_index=int(raw["root_joint_index"]),
            split_rule=rule,
            class_filter=tuple(class_filter) if class_filter is not None else None,
            subject_names=raw.get("subject_names"),
            exclude_trials=tuple(raw.get("exclude_trials", ())),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"profile {path} is malformed: {exc}") from exc


# ---------------------------------------------------------------------------
# MSR-Action3D skeleton text files
# ---------------------------------------------------------------------------


def load_msr3d(dir_path, on_reject: Optional[Callable[[str, str], None]] = None
               ) -> tuple[list[SkeletonTrial], list[tuple[str, str]]]:
    """Load every ``*_skeleton3D.txt`` under ``dir_path``.

    Malformed files (wrong token count, row count not divisible by 20,
    non-numeric tokens) are skipped with a logged warning and reported in
    the returned rejection list.  The confidence column is dropped.
    """
    root = Path(dir_path)
    if not root.is_dir():
        raise MalformedFileError(f"{dir_path} is not a directory")
    trials: list[SkeletonTrial] = []
    rejected: list[tuple[str, str]] = []

    def reject(name: str, reason: str) -> None:
        logger.warning("skipping %s: %s", name, reason)
        rejected.append((name, reason))
        if on_reject is not None:
            on_reject(name, reason)

    for path in sorted(root.glob("*_skeleton3D.txt")):
        match = _MSR3D_NAME.match(path.name)
        if match is None:
            reject(path.name, "filename does not match aAA_sSS_eEE_skeleton3D.txt")
            continue
        label, subject, _instance = (int(g) for g in match.groups())
        try:
            rows = np.loadtxt(path, dtype=np.float64, ndmin=2)
        except ValueError as exc:
            reject(path.name, f"non-numeric or ragged rows ({exc})")
            continue
        if rows.size == 0:
            reject(path.name, "empty file")
            continue
        if rows.shape[1] != 4:
            reject(path.name, f"expected 4 columns, found {rows.shape[1]}")
            continue
        if rows.shape[0] % MSR3D_JOINTS != 0:
            reject(
                path.name,
                f"row count {rows.shape[0]} not divisible by {MSR3D_JOINTS}",
            )
            continue
        frames = rows.shape[0] // MSR3D_JOINTS
        positions = rows[:, :3].reshape(frames, MSR3D_JOINTS, 3)
        trials.append(
            SkeletonTrial(
                trial_id=path.stem.replace("_skeleton3D", ""),
                label=label,
                subject_id=subject,
                positions=positions,
            )
        )
    return trials, rejected


# ---------------------------------------------------------------------------
# canonical trial format (JSON lines, bit-exact floats)
# ---------------------------------------------------------------------------


def _fmt_float(v: float) -> str:
    if math.isnan(v):
        return "NaN"
    if math.isinf(v):
        return "Infinity" if v > 0 else "-Infinity"
    s = format(v, ".17g")
    # keep a decimal point so JSON parses a float ("-0" would lose its sign)
    if not any(c in s for c in ".eE"):
        s += ".0"
    return s


def _frames_json(positions: np.ndarray) -> str:
    frames = []
    for frame in positions:
        joints = ",".join(
            "[" + ",".join(_fmt_float(float(c)) for c in joint) + "]"
            for joint in frame
        )
        frames.append("[" + joints + "]")
    return "[" + ",".join(frames) + "]"


def write_canonical(path, trials: Sequence[SkeletonTrial], dataset: str = "",
                    joint_names: Optional[Sequence[str]] = None) -> None:
    """Write trials in the canonical JSON-lines format."""
    if trials:
        n = trials[0].joint_count
        for t in trials:
            if t.joint_count != n:
                raise SchemaError(
                    f"trial {t.trial_id!r} has {t.joint_count} joints, "
                    f"expected {n}"
                )
    else:
        n = len(joint_names) if joint_names else 0
    header = {
        "format": CANONICAL_FORMAT,
        "dataset": dataset,
        "joint_count": n,
        "joint_names": list(joint_names) if joint_names else [],
    }
    lines = [json.dumps(header, sort_keys=True)]
    for t in trials:
        lines.append(
            "{"
            + f'"trial_id":{json.dumps(t.trial_id)},'
            + f'"label":{t.label},'
            + f'"subject_id":{t.subject_id},'
            + f'"frame_count":{t.frame_count},'
            + f'"frames":{_frames_json(t.positions)}'
            + "}"
        )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_canonical(path) -> list[SkeletonTrial]:
    """Read a canonical trial file, validating the schema record by record."""
    text = Path(path).read_text(encoding="utf-8")
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise SchemaError(f"{path}: empty file, expected a header line")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: header is not valid JSON: {exc}") from exc
    if not isinstance(header, dict) or header.get("format") != CANONICAL_FORMAT:
        raise SchemaError(
            f"{path}: header.format must be {CANONICAL_FORMAT!r}, "
            f"got {header.get('format')!r}"
        )
    try:
        joint_count = int(header["joint_count"])
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"{path}: header.joint_count missing or bad") from exc
    trials: list[SkeletonTrial] = []
    for k, line in enumerate(lines[1:]):
        where = f"record {k}"
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"{path}: {where} is not valid JSON: {exc}") from exc
        for key in ("trial_id", "label", "subject_id", "frame_count", "frames"):
            if key not in rec:
                raise SchemaError(f"{path}: {where}: missing field {key!r}")
        frames = rec["frames"]
        if not isinstance(frames, list) or len(frames) != rec["frame_count"]:
            raise SchemaError(
                f"{path}: {where}: frames has "
                f"{len(frames) if isinstance(frames, list) else 'non-list'} "
                f"entries, declared frame_count is {rec['frame_count']}"
            )
        for t, frame in enumerate(frames):
            if not isinstance(frame, list) or len(frame) != joint_count:
                raise SchemaError(
                    f"{path}: {where}: frames[{t}] has "
                    f"{len(frame) if isinstance(frame, list) else 'non-list'} "
                    f"joints, expected {joint_count}"
                )
            for j, joint in enumerate(frame):
                if not isinstance(joint, list) or len(joint) != 3:
                    raise SchemaError(
                        f"{path}: {where}: frames[{t}][{j}] must be [x, y, z]"
                    )
        try:
            positions = np.asarray(frames, dtype=np.float64)
        except (TypeError, ValueError) as exc:
            raise SchemaError(
                f"{path}: {where}: frames contain non-numeric values: {exc}"
            ) from exc
        trials.append(
            SkeletonTrial(
                trial_id=str(rec["trial_id"]),
                label=int(rec["label"]),
                subject_id=int(rec["subject_id"]),
                positions=positions,
            )
        )
    return trials
