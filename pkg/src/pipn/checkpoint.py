"""Versioned binary checkpoints with a fixed byte layout.

All integers and floats are little-endian.  Layout (version 1):

    offset  size  field
    0       8     magic b"PIPNCKPT"
    8       4     u32 format version (1)
    12      8     f64 width multiplier n_s
    20      1     u8 pooling (0 = max, 1 = average)
    21      1     u8 final activation (0 = tanh, 1 = linear)
    22      4     u32 input dimension
    26      4     u32 output field count
    30      4     u32 layer count L
    34      8L    per layer: u32 out_dim, u32 in_dim
    ...           per layer: f64 weight entries (row-major), f64 bias entries
    ...           u64 Adam step count t
    ...           per layer: f64 m_weight, m_bias, v_weight, v_bias entries
    ...           u64 epoch (number of completed epochs)
    ...           u64 root seed

Saving, loading and saving again produces identical bytes.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from pipn.autodiff import Layer, ParamStore
from pipn.model import ArchDescriptor, PipnModel
from pipn.training import AdamState

MAGIC = b"PIPNCKPT"
FORMAT_VERSION = 1

_POOLING_CODE = {"max": 0, "average": 1}
_POOLING_NAME = {v: k for k, v in _POOLING_CODE.items()}
_FINAL_CODE = {"tanh": 0, "linear": 1}
_FINAL_NAME = {v: k for k, v in _FINAL_CODE.items()}


def _f64_bytes(arr: np.ndarray) -> bytes:
    return np.ascontiguousarray(arr, dtype="<f8").tobytes()


def save_checkpoint(
    path: Path,
    model: PipnModel,
    adam_state: AdamState,
    epoch: int,
    root_seed: int,
) -> None:
    arch = model.arch
    parts = [
        MAGIC,
        struct.pack("<I", FORMAT_VERSION),
        struct.pack("<d", arch.n_s),
        struct.pack("<BB", _POOLING_CODE[arch.pooling], _FINAL_CODE[arch.final_activation]),
        struct.pack("<II", arch.input_dim, arch.n_pde),
        struct.pack("<I", len(model.params)),
    ]
    for layer in model.params:
        parts.append(struct.pack("<II", layer.out_dim, layer.in_dim))
    for layer in model.params:
        parts.append(_f64_bytes(layer.weight))
        parts.append(_f64_bytes(layer.bias))
    parts.append(struct.pack("<Q", adam_state.t))
    for (mw, mb), (vw, vb) in zip(adam_state.m, adam_state.v):
        parts.extend([_f64_bytes(mw), _f64_bytes(mb), _f64_bytes(vw), _f64_bytes(vb)])
    parts.append(struct.pack("<QQ", epoch, root_seed))
    Path(path).write_bytes(b"".join(parts))


def load_checkpoint(path: Path) -> tuple[PipnModel, AdamState, int, int]:
    """Returns (model, adam state, completed epochs, root seed)."""
    buf = Path(path).read_bytes()
    if buf[:8] != MAGIC:
        raise ValueError(f"{path}: not a checkpoint file (bad magic)")
    off = 8
    (version,) = struct.unpack_from("<I", buf, off)
    off += 4
    if version != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint format version {version}")
    (n_s,) = struct.unpack_from("<d", buf, off)
    off += 8
    pool_code, final_code = struct.unpack_from("<BB", buf, off)
    off += 2
    input_dim, n_pde = struct.unpack_from("<II", buf, off)
    off += 8
    (n_layers,) = struct.unpack_from("<I", buf, off)
    off += 4
    shapes = []
    for _ in range(n_layers):
        out_dim, in_dim = struct.unpack_from("<II", buf, off)
        off += 8
        shapes.append((out_dim, in_dim))

    def read_f64(count: int) -> np.ndarray:
        nonlocal off
        arr = np.frombuffer(buf, dtype="<f8", count=count, offset=off).copy()
        off += 8 * count
        return arr

    arch = ArchDescriptor(
        n_s=n_s,
        pooling=_POOLING_NAME[pool_code],
        final_activation=_FINAL_NAME[final_code],
        input_dim=input_dim,
        n_pde=n_pde,
    )
    expected = [(o, i) for _, i, o in arch.layer_plan()]
    if shapes != expected:
        raise ValueError(f"{path}: layer shapes {shapes} do not match the architecture")

    layers = []
    for k, (out_dim, in_dim) in enumerate(shapes):
        w = read_f64(out_dim * in_dim).reshape(out_dim, in_dim)
        b = read_f64(out_dim)
        layers.append(Layer(weight=w, bias=b, name=arch.layer_plan()[k][0]))
    (t,) = struct.unpack_from("<Q", buf, off)
    off += 8
    m, v = [], []
    for out_dim, in_dim in shapes:
        mw = read_f64(out_dim * in_dim).reshape(out_dim, in_dim)
        mb = read_f64(out_dim)
        vw = read_f64(out_dim * in_dim).reshape(out_dim, in_dim)
        vb = read_f64(out_dim)
        m.append((mw, mb))
        v.append((vw, vb))
    epoch, root_seed = struct.unpack_from("<QQ", buf, off)
    off += 16
    if off != len(buf):
        raise ValueError(f"{path}: {len(buf) - off} trailing bytes")
    model = PipnModel(arch=arch, params=ParamStore(layers))
    return model, AdamState(m=m, v=v, t=t), int(epoch), int(root_seed)
