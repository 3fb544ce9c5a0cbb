"""Semantic annotation of texture classes.

For every class the features are ranked by significance, the ratio of the
within-class to the global standard deviation (lower is more telling), and
the class means of the top-ranked features are translated into words with a
dictionary of value intervals.
"""

from __future__ import annotations

import json
import logging
import math
import warnings
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import DictError, InsufficientAnnotationsWarning, UndefinedSignificance
from .features import FEATURE_NAMES

logger = logging.getLogger(__name__)

N_SELECT = 5
NO_ANNOTATION = "no annotation"


@dataclass(frozen=True)
class Band:
    left: float
    right: float
    phrase: str
    source: str = ""

    def contains(self, value: float) -> bool:
        return self.left <= value < self.right


@dataclass
class SemanticDictionary:
    """Per-feature sorted, disjoint half-open intervals with phrases."""

    entries: dict = field(default_factory=dict)

    def bands(self, feature: str) -> list:
        return self.entries.get(feature, [])

    def lookup(self, feature: str, value: float) -> Band | None:
        if not np.isfinite(value):
            return None
        for band in self.bands(feature):
            if band.contains(value):
                return band
        return None

    def phrases(self) -> set:
        return {b.phrase for bands in self.entries.values() for b in bands}


def _bound(token: str, lineno: int) -> float:
    try:
        return float(token)
    except ValueError:
        raise DictError(f"line {lineno}: bad bound {token!r}") from None


def parse_dictionary(text: str, names=FEATURE_NAMES) -> SemanticDictionary:
    """Parse ``feature | left | right | phrase [| source]`` lines.

    Blank lines and ``#`` comments are ignored.  Raises ``DictError`` on
    unknown features, empty or reversed intervals and overlapping bands.
    """
    known = set(names)
    entries: dict = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = [p.strip() for p in line.split("|")]
        if len(parts) not in (4, 5):
            raise DictError(f"line {lineno}: expected 4 or 5 '|'-separated fields")
        feature, left, right, phrase = parts[:4]
        if feature not in known:
            raise DictError(f"line {lineno}: unknown feature {feature!r}")
        lo, hi = _bound(left, lineno), _bound(right, lineno)
        if math.isnan(lo) or math.isnan(hi) or not lo < hi:
            raise DictError(f"line {lineno}: empty interval [{left}, {right})")
        if not phrase:
            raise DictError(f"line {lineno}: missing phrase")
        source = parts[4] if len(parts) == 5 else ""
        entries.setdefault(feature, []).append(Band(lo, hi, phrase, source))
    for feature, bands in entries.items():
        bands.sort(key=lambda b: (b.left, b.right))
        for a, b in zip(bands, bands[1:]):
            if b.left < a.right:
                raise DictError(f"{feature}: bands [{a.left}, {a.right}) and "
                                f"[{b.left}, {b.right}) overlap")
    return SemanticDictionary(entries)


def load_dictionary(path=None) -> SemanticDictionary:
    """Read a dictionary file; ``None`` loads the bundled default."""
    if path is None:
        text = resources.files("texelseg").joinpath("data/semantic_dictionary.txt").read_text()
    else:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise DictError(f"cannot read dictionary {path}: {exc}") from exc
    return parse_dictionary(text)


def significance(values, labels, class_id: int, feature: int) -> float:
    """Population std of the feature within the class over its std across
    all texels.  Raises ``UndefinedSignificance`` for a constant feature."""
    values = np.asarray(values, dtype=np.float64)
    labels = np.asarray(labels)
    col = values[:, feature] if values.ndim == 2 else values
    members = col[labels == class_id]
    if members.size == 0:
        raise ValueError(f"class {class_id} is empty")
    total = float(np.std(col))
    if not total > 0:
        raise UndefinedSignificance(f"feature {feature} is constant over all texels")
    return float(np.std(members)) / total


@dataclass(frozen=True)
class AnnotationRow:
    feature: str
    significance: float
    value: float
    phrase: str


@dataclass
class ClassAnnotation:
    class_id: int
    size: int
    rows: list


def annotate_class(values, labels, class_id: int, dictionary: SemanticDictionary,
                   n_select: int = N_SELECT, names=FEATURE_NAMES) -> ClassAnnotation:
    """The ``n_select`` most significant features whose class mean has a
    phrase, in ascending significance (ties in canonical feature order)."""
    values = np.asarray(values, dtype=np.float64)
    labels = np.asarray(labels)
    scored = []
    for j, name in enumerate(names):
        try:
            scored.append((significance(values, labels, class_id, j), j, name))
        except UndefinedSignificance:
            logger.debug("%s constant over all texels; not ranked", name)
    scored.sort(key=lambda t: (t[0], t[1]))
    members = values[labels == class_id]
    rows = []
    for s, j, name in scored:
        mean = float(members[:, j].mean())
        band = dictionary.lookup(name, mean)
        if band is None:
            continue
        rows.append(AnnotationRow(name, s, mean, band.phrase))
        if len(rows) == n_select:
            break
    if len(rows) < n_select:
        warnings.warn(f"class {class_id}: only {len(rows)} of {n_select} features annotated",
                      InsufficientAnnotationsWarning, stacklevel=2)
    return ClassAnnotation(int(class_id), int(len(members)), rows)


def annotate_all(features, clustering, dictionary: SemanticDictionary,
                 n_select: int = N_SELECT) -> list:
    """Annotate every class of a clustering over the valid texels of a
    feature table."""
    valid = np.asarray(features.valid, dtype=bool) & (np.asarray(clustering.labels) >= 0)
    values = features.values[valid]
    labels = np.asarray(clustering.labels)[valid]
    if len(values) == 0:
        return []
    return [annotate_class(values, labels, c, dictionary, n_select, tuple(features.names))
            for c in np.unique(labels)]


def report_json(annotations: list) -> str:
    doc = [{"class": a.class_id, "size": a.size, "rows": [asdict(r) for r in a.rows]}
           for a in annotations]
    return json.dumps(doc, indent=2)


def report_text(annotations: list) -> str:
    """Plain-text table with Class / Feature / Value / Semantic columns."""
    header = ("Class", "Feature", "Value", "Semantic")
    body = []
    for a in annotations:
        if not a.rows:
            body.append((str(a.class_id), "-", "-", NO_ANNOTATION))
        for i, r in enumerate(a.rows):
            body.append((str(a.class_id) if i == 0 else "", r.feature, f"{r.value:.5g}", r.phrase))
    widths = [max(len(row[k]) for row in [header] + body) for k in range(4)]
    lines = ["  ".join(c.ljust(w) for c, w in zip(header, widths)).rstrip(),
             "  ".join("-" * w for w in widths)]
    lines += ["  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip() for row in body]
    return "\n".join(lines) + "\n"
