"""Per-geometry dataset files and run manifests (versioned JSON).

One file per geometry holds the domain parameters, the point cloud with
kind tags, the oracle fields (temperature, temperature gradient,
reference displacements) and the sensor readings.  Files are written with
sorted keys and no timestamps, so regeneration with the same config and
seed is byte-identical.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from pipn.geometry import DomainSpec, PointCloud, SensorSet
from pipn.training import GeometrySample

SCHEMA_VERSION = 1
MANIFEST_NAME = "manifest.json"


def _spec_dict(spec: DomainSpec) -> dict:
    return {
        "n_poly": spec.n_poly,
        "circumradius": spec.circumradius,
        "orientation_deg": spec.orientation_deg,
        "side_length": spec.side_length,
    }


def _spec_from_dict(d: dict) -> DomainSpec:
    return DomainSpec(
        n_poly=int(d["n_poly"]),
        circumradius=float(d["circumradius"]),
        orientation_deg=float(d["orientation_deg"]),
        side_length=float(d["side_length"]),
    )


def write_geometry_file(path: Path, sample: GeometrySample, oracle_meta: dict) -> None:
    cloud, sensors = sample.cloud, sample.sensors
    payload = {
        "schema_version": SCHEMA_VERSION,
        "spec": _spec_dict(cloud.spec),
        "n_points": cloud.n_points,
        "coords": cloud.coords.tolist(),
        "kind": cloud.kind.astype(int).tolist(),
        "kind_legend": {"0": "interior", "1": "outer_boundary", "2": "cavity_boundary"},
        "temperature": None if cloud.temperature is None else cloud.temperature.tolist(),
        "temp_grad": None if cloud.temp_grad is None else cloud.temp_grad.tolist(),
        "ref_u": None if cloud.ref_u is None else cloud.ref_u.tolist(),
        "ref_v": None if cloud.ref_v is None else cloud.ref_v.tolist(),
        "sensors": {
            "indices": sensors.indices.astype(int).tolist(),
            "u": None if sensors.u_sensor is None else sensors.u_sensor.tolist(),
            "v": None if sensors.v_sensor is None else sensors.v_sensor.tolist(),
        },
        "oracle": oracle_meta,
    }
    Path(path).write_text(json.dumps(payload, sort_keys=True, indent=1) + "\n")


def read_geometry_file(path: Path) -> GeometrySample:
    payload = json.loads(Path(path).read_text())
    version = payload.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ValueError(f"{path}: unsupported dataset schema version {version}")
    opt = lambda key: None if payload[key] is None else np.asarray(payload[key], dtype=float)
    cloud = PointCloud(
        spec=_spec_from_dict(payload["spec"]),
        coords=np.asarray(payload["coords"], dtype=float),
        kind=np.asarray(payload["kind"], dtype=np.int8),
        temperature=opt("temperature"),
        temp_grad=opt("temp_grad"),
        ref_u=opt("ref_u"),
        ref_v=opt("ref_v"),
    )
    s = payload["sensors"]
    sensors = SensorSet(
        indices=np.asarray(s["indices"], dtype=np.intp),
        u_sensor=None if s["u"] is None else np.asarray(s["u"], dtype=float),
        v_sensor=None if s["v"] is None else np.asarray(s["v"], dtype=float),
    )
    return GeometrySample(cloud=cloud, sensors=sensors)


def write_manifest(directory: Path, generated: list[dict], failures: list[dict], config: dict) -> None:
    payload = {
        "schema_version": SCHEMA_VERSION,
        "generated": generated,
        "failures": failures,
        "config": config,
    }
    (Path(directory) / MANIFEST_NAME).write_text(
        json.dumps(payload, sort_keys=True, indent=1) + "\n"
    )


def read_manifest(directory: Path) -> dict:
    return json.loads((Path(directory) / MANIFEST_NAME).read_text())


def load_dataset(directory: Path) -> list[GeometrySample]:
    """Load every geometry listed by the manifest, in manifest order."""
    manifest = read_manifest(directory)
    return [read_geometry_file(Path(directory) / e["file"]) for e in manifest["generated"]]
