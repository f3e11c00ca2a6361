"""Rectangle-based train/validation/test split plans with training-set versions."""
import json
import logging
from dataclasses import dataclass, field, replace
from importlib import resources

import numpy as np

log = logging.getLogger(__name__)

BUNDLED_PLAN = "split_plan_512x722.json"
VERSIONS = ("A", "B", "C", "D", "E")
UNUSED = "unused"


class PlanError(ValueError):
    pass


@dataclass(frozen=True)
class Rect:
    """Half-open pixel box ``[y0, y1) x [x0, x1)``."""

    y0: int
    y1: int
    x0: int
    x1: int

    def __post_init__(self):
        if self.y1 <= self.y0 or self.x1 <= self.x0 or min(self.y0, self.x0) < 0:
            raise PlanError(f"empty or negative rectangle {self.to_dict()}")

    @classmethod
    def coerce(cls, r):
        if isinstance(r, Rect):
            return r
        if isinstance(r, dict):
            return cls(*(int(r[k]) for k in ("y0", "y1", "x0", "x1")))
        return cls(*(int(v) for v in r))

    def to_dict(self):
        return {"y0": self.y0, "y1": self.y1, "x0": self.x0, "x1": self.x1}

    @property
    def area(self):
        return (self.y1 - self.y0) * (self.x1 - self.x0)

    def within(self, frame):
        return self.y1 <= frame[0] and self.x1 <= frame[1]

    def contains(self, origins):
        y = origins[:, 0]
        x = origins[:, 1]
        return (y >= self.y0) & (y < self.y1) & (x >= self.x0) & (x < self.x1)

    def paint(self, mask):
        mask[self.y0:self.y1, self.x0:self.x1] = True


@dataclass
class SplitPlan:
    """Named rectangles for validation, test and each training-set version."""

    frame: tuple
    validation: list
    test: list
    train: dict
    expected: dict = field(default_factory=dict)
    name: str = ""

    def __post_init__(self):
        self.frame = tuple(int(v) for v in self.frame)
        self.validation = [Rect.coerce(r) for r in self.validation]
        self.test = [Rect.coerce(r) for r in self.test]
        self.train = {str(k): [Rect.coerce(r) for r in v] for k, v in self.train.items()}
        self.validate()

    def mask(self, rects):
        m = np.zeros(self.frame, dtype=bool)
        for r in rects:
            r.paint(m)
        return m

    def validate(self):
        if not self.train:
            raise PlanError("plan defines no training-set version")
        groups = {"validation": self.validation, "test": self.test, **{f"train-{k}": v for k, v in self.train.items()}}
        for name, rects in groups.items():
            for r in rects:
                if not r.within(self.frame):
                    raise PlanError(f"{name} rectangle {r.to_dict()} outside frame {self.frame}")
        val, test = self.mask(self.validation), self.mask(self.test)
        if (val & test).any():
            raise PlanError("validation and test rectangles overlap")
        for version, rects in self.train.items():
            tr = self.mask(rects)
            for other, m in (("validation", val), ("test", test)):
                if (tr & m).any():
                    raise PlanError(f"train-{version} rectangles overlap {other}")

    def counts(self):
        """Pixel counts per split and per training-set version (overlaps counted once)."""
        out = {"validation": int(self.mask(self.validation).sum()), "test": int(self.mask(self.test).sum())}
        for version, rects in self.train.items():
            out[version] = int(self.mask(rects).sum())
        return out

    def to_dict(self):
        return {
            "name": self.name,
            "frame": list(self.frame),
            "validation": [r.to_dict() for r in self.validation],
            "test": [r.to_dict() for r in self.test],
            "train": {k: [r.to_dict() for r in v] for k, v in self.train.items()},
            "expected": dict(self.expected),
        }

    def rescaled(self, frame):
        """The same layout stretched onto another frame; expected counts are dropped."""
        fy, fx = frame[0] / self.frame[0], frame[1] / self.frame[1]

        def conv(rects):
            out = []
            for r in rects:
                y0, y1 = round(r.y0 * fy), round(r.y1 * fy)
                x0, x1 = round(r.x0 * fx), round(r.x1 * fx)
                if y1 > y0 and x1 > x0:
                    out.append(Rect(y0, y1, x0, x1))
            return out

        train = {k: conv(v) for k, v in self.train.items()}
        return SplitPlan(frame, conv(self.validation), conv(self.test), {k: v for k, v in train.items() if v},
                         {}, f"{self.name} rescaled to {frame[0]}x{frame[1]}")

    @classmethod
    def from_dict(cls, d):
        try:
            return cls(d["frame"], d["validation"], d["test"], d["train"], d.get("expected", {}), d.get("name", ""))
        except KeyError as exc:
            raise PlanError(f"split plan missing field {exc.args[0]!r}") from None


def load_plan(path=None):
    """Read a plan from JSON; ``None`` loads the bundled 512x722 plan."""
    if path is None:
        text = resources.files("stokesae").joinpath("data", BUNDLED_PLAN).read_text()
    else:
        with open(path) as fh:
            text = fh.read()
    return SplitPlan.from_dict(json.loads(text))


def whole_frame_plan(frame, version="A"):
    """Everything is training data; validation and test are empty."""
    return SplitPlan(frame, [], [], {version: [Rect(0, frame[0], 0, frame[1])]})


def split_dataset(ds, plan, version="A"):
    """Label each pixel ``train-<version>``, ``validation``, ``test`` or ``unused``.

    Returns ``(labelled dataset, report)`` where the report compares realised
    and expected counts.
    """
    if tuple(ds.frame) != plan.frame:
        raise PlanError(f"plan frame {plan.frame} does not match dataset frame {tuple(ds.frame)}")
    if version not in plan.train:
        raise PlanError(f"unknown training-set version {version!r}; plan has {sorted(plan.train)}")
    labels = np.full(len(ds), UNUSED, dtype=f"<U{max(10, 6 + len(version))}")
    y, x = ds.origins[:, 0], ds.origins[:, 1]
    for name, rects in (("validation", plan.validation), ("test", plan.test), (f"train-{version}", plan.train[version])):
        labels[plan.mask(rects)[y, x]] = name
    realised = {name: int(np.sum(labels == name)) for name in ("validation", "test", f"train-{version}", UNUSED)}
    report = {"version": version, "realised": realised, "expected": {}, "excluded": int(len(ds.excluded))}
    for key, label in (("validation", "validation"), ("test", "test"), (version, f"train-{version}")):
        if key in plan.expected:
            report["expected"][label] = int(plan.expected[key])
            if realised[label] != plan.expected[key]:
                log.warning("%s: %d pixels, plan expects %d", label, realised[label], plan.expected[key])
    report["matches_expected"] = all(realised[k] == v for k, v in report["expected"].items())
    return replace(ds, labels=labels), report
