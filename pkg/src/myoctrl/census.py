"""Per-body-part census of segments, joints and muscle-tendon units.

The shipped ``ms-human-700.census.json`` mirrors the published census tables of the
full-body model (only the counts; the geometry itself is not reproduced).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .model import shipped_path


@dataclass(frozen=True)
class BodyPart:
    name: str
    segments: int
    joints: int


@dataclass(frozen=True)
class MuscleGroup:
    name: str
    mtus: int
    body_part: str = ""


@dataclass(frozen=True)
class CensusManifest:
    body_parts: tuple = ()
    muscle_groups: tuple = ()
    totals: dict = field(default_factory=lambda: {"segments": 0, "joints": 0, "mtus": 0})

    def summed(self) -> dict:
        return {
            "segments": sum(p.segments for p in self.body_parts),
            "joints": sum(p.joints for p in self.body_parts),
            "mtus": sum(g.mtus for g in self.muscle_groups),
        }


@dataclass
class CensusReport:
    passed: bool
    totals: dict
    mismatches: list

    def __str__(self):
        head = "census: PASS" if self.passed else "census: FAIL"
        tot = f"totals segments={self.totals['segments']} joints={self.totals['joints']} " \
              f"mtus={self.totals['mtus']}"
        return "\n".join([head, tot] + [f"  mismatch: {m}" for m in self.mismatches])


def manifest_from_dict(doc: dict) -> CensusManifest:
    parts = tuple(BodyPart(p["name"], int(p["segments"]), int(p["joints"]))
                  for p in doc.get("body_parts", []))
    groups = tuple(MuscleGroup(g["name"], int(g["mtus"]), g.get("body_part", ""))
                   for g in doc.get("muscle_groups", []))
    totals = doc.get("totals", {"segments": 0, "joints": 0, "mtus": 0})
    return CensusManifest(parts, groups, {k: int(totals.get(k, 0)) for k in ("segments", "joints", "mtus")})


def manifest_to_dict(m: CensusManifest) -> dict:
    return {
        "body_parts": [{"name": p.name, "segments": p.segments, "joints": p.joints}
                       for p in m.body_parts],
        "muscle_groups": [{"name": g.name, "mtus": g.mtus, "body_part": g.body_part}
                          for g in m.muscle_groups],
        "totals": dict(m.totals),
    }


def load_census(path) -> CensusManifest:
    return manifest_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def shipped_census() -> CensusManifest:
    return load_census(shipped_path("ms-human-700.census.json"))


# Counts from the published census tables of the full-body model.
MS_HUMAN_700 = CensusManifest(
    body_parts=(
        BodyPart("Pelvis", 1, 6),
        BodyPart("Lower Extremity", 12, 28),
        BodyPart("Torso", 55, 132),
        BodyPart("Upper Extremity", 22, 40),
    ),
    muscle_groups=(
        MuscleGroup("Iliac and Gluteal Region", 46, "Pelvis and Lower Extremity"),
        MuscleGroup("Thigh", 32, "Pelvis and Lower Extremity"),
        MuscleGroup("Calf", 22, "Pelvis and Lower Extremity"),
        MuscleGroup("Abdomen", 98, "Torso"),
        MuscleGroup("Spinalis", 154, "Torso"),
        MuscleGroup("Cervical", 38, "Torso"),
        MuscleGroup("Thoracic", 26, "Torso"),
        MuscleGroup("Lumbar", 38, "Torso"),
        MuscleGroup("Intercostal", 152, "Torso"),
        MuscleGroup("Shoulder", 24, "Upper Extremity"),
        MuscleGroup("Elbow", 18, "Upper Extremity"),
        MuscleGroup("Forearm", 16, "Upper Extremity"),
        MuscleGroup("Wrist/Hand", 36, "Upper Extremity"),
    ),
    totals={"segments": 90, "joints": 206, "mtus": 700},
)


def census_check(manifest: CensusManifest, expected: CensusManifest = MS_HUMAN_700) -> CensusReport:
    """Compare a manifest row by row against the expected counts.

    Also checks that each manifest's stated totals equal the sum of its rows.
    """
    bad = []
    exp_parts = {p.name: p for p in expected.body_parts}
    got_parts = {p.name: p for p in manifest.body_parts}
    for name in list(exp_parts) + [n for n in got_parts if n not in exp_parts]:
        e, g = exp_parts.get(name), got_parts.get(name)
        if e is None:
            bad.append(f"{name}: unexpected body part")
            continue
        if g is None:
            bad.append(f"{name}: body part missing")
            continue
        if g.segments != e.segments:
            bad.append(f"{name} segments: got {g.segments}, expected {e.segments}")
        if g.joints != e.joints:
            bad.append(f"{name} joints: got {g.joints}, expected {e.joints}")

    exp_groups = {g.name: g for g in expected.muscle_groups}
    got_groups = {g.name: g for g in manifest.muscle_groups}
    for name in list(exp_groups) + [n for n in got_groups if n not in exp_groups]:
        e, g = exp_groups.get(name), got_groups.get(name)
        if e is None:
            bad.append(f"{name}: unexpected muscle group")
        elif g is None:
            bad.append(f"{name}: muscle group missing")
        elif g.mtus != e.mtus:
            bad.append(f"{name} MTUs: got {g.mtus}, expected {e.mtus}")

    summed = manifest.summed()
    for key in ("segments", "joints", "mtus"):
        if manifest.totals.get(key, 0) != summed[key]:
            bad.append(f"Total {key}: stated {manifest.totals.get(key, 0)} but rows sum to {summed[key]}")
        if summed[key] != expected.totals.get(key, 0):
            bad.append(f"Total {key}: got {summed[key]}, expected {expected.totals.get(key, 0)}")
    return CensusReport(passed=not bad, totals=summed, mismatches=bad)
