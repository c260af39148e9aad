"""Versioned binary container for a trained scene.

One file holds the Gaussians, control points, motion-field parameters, and
a JSON metadata echo. Layout (documented byte-for-byte in docs/format.md):
an 8-byte magic, a little-endian u32 version, a u32 section count, then a
table of (16-byte name, u64 offset, u64 length) entries followed by the
section payloads. Array payloads carry their own ndim/shape/dtype prefix,
so a load followed by a save reproduces the file bitwise.
"""

import json
import struct
from dataclasses import dataclass, field as dc_field

import numpy as np

from ..core.gaussians import GaussianSet
from ..core.sh import C0
from ..deform.control import ControlPointSet
from ..deform.field import DeformationField
from ..errors import CorruptArchiveError, UnsupportedVersionError

MAGIC = b"DSPLAT\x00\n"
VERSION = 1

_DTYPE_CODES = {0: "<f8"}
_NAME_BYTES = 16

# fixed write order keeps save -> load -> save byte-identical
_ARRAY_SECTIONS = (
    "gauss_mu",
    "gauss_q",
    "gauss_s",
    "gauss_sigma",
    "gauss_sh",
    "ctrl_p",
    "ctrl_o",
    "field_params",
)


@dataclass
class SceneArchive:
    """Everything needed to re-render and re-animate a trained scene."""

    gaussians: GaussianSet
    control: ControlPointSet
    field: DeformationField
    meta: dict = dc_field(default_factory=dict)


def _encode_array(arr: np.ndarray) -> bytes:
    arr = np.ascontiguousarray(arr, dtype="<f8")
    head = struct.pack("<II", arr.ndim, 0)
    head += struct.pack(f"<{arr.ndim}Q", *arr.shape)
    return head + arr.tobytes()


def _decode_array(buf: bytes, name: str) -> np.ndarray:
    if len(buf) < 8:
        raise CorruptArchiveError(f"section {name!r}: truncated array header")
    ndim, code = struct.unpack_from("<II", buf, 0)
    if code not in _DTYPE_CODES:
        raise CorruptArchiveError(f"section {name!r}: unknown dtype code {code}")
    if len(buf) < 8 + 8 * ndim:
        raise CorruptArchiveError(f"section {name!r}: truncated shape")
    shape = struct.unpack_from(f"<{ndim}Q", buf, 8)
    start = 8 + 8 * ndim
    count = int(np.prod(shape, dtype=np.int64)) if ndim else 1
    data = np.frombuffer(buf, dtype=_DTYPE_CODES[code], count=-1, offset=start)
    if data.size != count:
        raise CorruptArchiveError(
            f"section {name!r}: expected {count} values, found {data.size}"
        )
    return data.reshape(shape).copy()


def _sections_of(archive: SceneArchive) -> dict:
    gs, ctrl, field = archive.gaussians, archive.control, archive.field
    meta_doc = {
        "field": {
            "l_x": field.l_x,
            "l_t": field.l_t,
            "width": field.width,
            "depth": field.depth,
            "center": [float(v) for v in field.center],
            "scale": float(field.scale),
        },
        "user": archive.meta,
    }
    payloads = {"meta": json.dumps(meta_doc, sort_keys=True, separators=(",", ":")).encode()}
    arrays = {
        "gauss_mu": gs.mu,
        "gauss_q": gs.q,
        "gauss_s": gs.s,
        "gauss_sigma": gs.sigma,
        "gauss_sh": gs.sh,
        "ctrl_p": ctrl.p,
        "ctrl_o": ctrl.o,
        "field_params": field.params,
    }
    for name in _ARRAY_SECTIONS:
        payloads[name] = _encode_array(arrays[name])
    return payloads


def save_scene(archive: SceneArchive, path: str) -> None:
    """Write the archive; the same content always yields the same bytes."""
    payloads = _sections_of(archive)
    names = ["meta"] + list(_ARRAY_SECTIONS)
    table_at = len(MAGIC) + 8
    data_at = table_at + 32 * len(names)
    table = b""
    body = b""
    offset = data_at
    for name in names:
        raw = name.encode()
        if len(raw) > _NAME_BYTES:
            raise CorruptArchiveError(f"section name too long: {name!r}")
        payload = payloads[name]
        table += raw.ljust(_NAME_BYTES, b"\x00")
        table += struct.pack("<QQ", offset, len(payload))
        body += payload
        offset += len(payload)
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<II", VERSION, len(names)))
        f.write(table)
        f.write(body)


def _read_sections(blob: bytes, path: str) -> dict:
    if len(blob) < len(MAGIC) + 8:
        raise CorruptArchiveError(f"{path}: too short to hold a header")
    if blob[: len(MAGIC)] != MAGIC:
        raise CorruptArchiveError(f"{path}: bad magic, not a scene archive")
    version, n_sections = struct.unpack_from("<II", blob, len(MAGIC))
    if version != VERSION:
        raise UnsupportedVersionError(
            f"{path}: archive version {version}, this build reads version {VERSION}"
        )
    table_at = len(MAGIC) + 8
    if len(blob) < table_at + 32 * n_sections:
        raise CorruptArchiveError(f"{path}: truncated section table")
    sections = {}
    for i in range(n_sections):
        at = table_at + 32 * i
        name = blob[at : at + _NAME_BYTES].rstrip(b"\x00").decode()
        offset, length = struct.unpack_from("<QQ", blob, at + _NAME_BYTES)
        if offset + length > len(blob):
            raise CorruptArchiveError(f"{path}: section {name!r} runs past end of file")
        sections[name] = blob[offset : offset + length]
    return sections


def load_scene(path: str) -> SceneArchive:
    with open(path, "rb") as f:
        blob = f.read()
    sections = _read_sections(blob, path)
    for name in ("meta",) + _ARRAY_SECTIONS:
        if name not in sections:
            raise CorruptArchiveError(f"{path}: missing section {name!r}")
    try:
        meta_doc = json.loads(sections["meta"].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CorruptArchiveError(f"{path}: unreadable meta section ({e})") from e

    arrays = {name: _decode_array(sections[name], name) for name in _ARRAY_SECTIONS}
    gs = GaussianSet(
        mu=arrays["gauss_mu"],
        q=arrays["gauss_q"],
        s=arrays["gauss_s"],
        sigma=arrays["gauss_sigma"],
        sh=arrays["gauss_sh"],
    )
    ctrl = ControlPointSet(p=arrays["ctrl_p"], o=arrays["ctrl_o"])
    fmeta = meta_doc.get("field", {})
    try:
        field = DeformationField(
            params=arrays["field_params"],
            l_x=int(fmeta["l_x"]),
            l_t=int(fmeta["l_t"]),
            width=int(fmeta["width"]),
            depth=int(fmeta["depth"]),
            center=np.asarray(fmeta["center"], dtype=float),
            scale=float(fmeta["scale"]),
        )
    except (KeyError, ValueError) as e:
        raise CorruptArchiveError(f"{path}: bad field metadata ({e})") from e
    return SceneArchive(gaussians=gs, control=ctrl, field=field, meta=meta_doc.get("user", {}))


def export_pointcloud(gs: GaussianSet, path: str) -> None:
    """Dump centers with their base colors as 'x y z r g b' text lines."""
    rgb = np.clip(0.5 + C0 * gs.sh[:, 0, :], 0.0, 1.0)
    with open(path, "w") as f:
        for (x, y, z), (r, g, b) in zip(gs.mu, rgb):
            f.write(f"{x:.8g} {y:.8g} {z:.8g} {r:.6g} {g:.6g} {b:.6g}\n")
