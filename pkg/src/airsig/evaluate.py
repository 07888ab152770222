"""Closed-set recognition, verification trials, ROC/EER and the text report format."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, ParseError


@dataclass
class RocCurve:
    thresholds: np.ndarray
    far: np.ndarray
    frr: np.ndarray
    eer: float

    def points(self):
        return list(zip(self.thresholds.tolist(), self.far.tolist(), self.frr.tolist()))


@dataclass
class VerificationReport:
    recognition_accuracy: float
    roc_random: RocCurve
    roc_skilled: RocCurve | None
    trial_counts: dict = field(default_factory=dict)

    @property
    def eer_random(self) -> float:
        return self.roc_random.eer

    @property
    def eer_skilled(self) -> float | None:
        return None if self.roc_skilled is None else self.roc_skilled.eer


def recognition_accuracy(model, X, y) -> float:
    if len(X) == 0:
        raise DomainError("recognition accuracy needs a non-empty test set")
    return float((model.predict(X) == np.asarray(y)).mean())


def verification_trials(model, X, y, mode: str = "random", forgery_X=None, forgery_y=None):
    """Genuine and impostor scores; a score is the softmax probability of the claimed id.

    random: each genuine sample claimed as its own id (genuine) and every
    other id (impostor). skilled: genuine trials as above, each forgery
    claimed as its target.
    """
    probs = model.predict_proba(X)
    y = np.asarray(y, dtype=int)
    genuine = probs[np.arange(len(y)), y]
    if mode == "random":
        others = np.ones_like(probs, dtype=bool)
        others[np.arange(len(y)), y] = False
        return genuine, probs[others]
    if mode == "skilled":
        if forgery_X is None or len(forgery_X) == 0:
            raise DomainError("skilled-forgery trials need forgery samples")
        fy = np.asarray(forgery_y, dtype=int)
        fprobs = model.predict_proba(forgery_X)
        return genuine, fprobs[np.arange(len(fy)), fy]
    raise DomainError(f"unknown verification mode {mode!r}")


def roc_eer(genuine, impostor) -> RocCurve:
    """Threshold sweep over all observed scores plus +inf.

    FAR(th) = share of impostor scores >= th, FRR(th) = share of genuine
    scores < th. The EER is read where FRR first reaches FAR, interpolating
    linearly between the two bracketing thresholds.
    """
    g = np.sort(np.asarray(genuine, dtype=float))
    imp = np.sort(np.asarray(impostor, dtype=float))
    if len(g) == 0 or len(imp) == 0:
        raise DomainError("ROC needs both genuine and impostor scores")
    th = np.append(np.unique(np.concatenate([g, imp])), np.inf)
    far = (len(imp) - np.searchsorted(imp, th, side="left")) / len(imp)
    frr = np.searchsorted(g, th, side="left") / len(g)
    return RocCurve(th, far, frr, _crossing(far, frr))


def _crossing(far, frr) -> float:
    i = int(np.argmax(frr >= far))
    if frr[i] == far[i] or i == 0:
        return float(far[i])
    d0 = far[i - 1] - frr[i - 1]
    d1 = far[i] - frr[i]
    s = d0 / (d0 - d1)
    return float(far[i - 1] + s * (far[i] - far[i - 1]))


def evaluate_model(model, split, with_skilled: bool = True) -> VerificationReport:
    Xt, yt = split.test
    acc = recognition_accuracy(model, Xt, yt)
    g, imp_r = verification_trials(model, Xt, yt, "random")
    counts = {"genuine_trials": len(g), "random_impostor_trials": len(imp_r)}
    roc_s = None
    if with_skilled and len(split.forgery[0]):
        _, imp_s = verification_trials(model, Xt, yt, "skilled", *split.forgery)
        counts["skilled_impostor_trials"] = len(imp_s)
        roc_s = roc_eer(g, imp_s)
    return VerificationReport(acc, roc_eer(g, imp_r), roc_s, counts)


# -- report text format -----------------------------------------------------

def format_report(report: VerificationReport, extra: dict | None = None) -> str:
    lines = [f"recognition_accuracy = {report.recognition_accuracy:.6f}",
             f"eer_random = {report.eer_random:.6f}"]
    if report.roc_skilled is not None:
        lines.append(f"eer_skilled = {report.eer_skilled:.6f}")
    for k, v in {**report.trial_counts, **(extra or {})}.items():
        lines.append(f"{k} = {v}")
    for name, roc in (("roc_random", report.roc_random), ("roc_skilled", report.roc_skilled)):
        if roc is None:
            continue
        lines.append("")
        lines.append(f"[{name}]")
        lines.append("threshold,far,frr")
        lines.extend(f"{t:.9g},{a:.9g},{r:.9g}" for t, a, r in roc.points())
    return "\n".join(lines) + "\n"


def parse_report(text: str) -> tuple[dict, dict]:
    """Return (key-value fields, {table name: (thresholds, far, frr)})."""
    fields, tables = {}, {}
    current = None
    for i, raw in enumerate(text.splitlines()):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1]
            tables[current] = []
        elif current is None:
            if "=" not in line:
                raise ParseError("expected 'key = value'", i)
            k, v = (s.strip() for s in line.split("=", 1))
            fields[k] = v
        elif line != "threshold,far,frr":
            try:
                tables[current].append([float(c) for c in line.split(",")])
            except ValueError:
                raise ParseError("non-numeric ROC row", i) from None
    arrays = {k: tuple(np.array(v).reshape(-1, 3).T) for k, v in tables.items()}
    return fields, arrays
