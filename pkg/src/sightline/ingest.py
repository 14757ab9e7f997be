"""Readers and writers for labels, detections, tensors, P6 images and manifests.

All parsers raise ``ParseError`` for bad input, carrying a 1-based line
number (text formats) or byte offset (binary formats).
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .augment import ImageBuffer
from .geometry import BoundingBox, Detection, GridTensor, GroundTruthBox
from .loss import TargetTensor

COORD_TOL = 1e-9
_NUMBER = re.compile(r"[+-]?(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][+-]?\d+)?")


class ParseError(ValueError):
    """Structured parse failure with location."""

    def __init__(
        self,
        reason: str,
        line: int | None = None,
        offset: int | None = None,
        path: str | None = None,
        field: str | None = None,
    ):
        self.reason = reason
        self.line = line
        self.offset = offset
        self.path = path
        self.field = field
        where = []
        if path:
            where.append(path)
        if field is not None:
            where.append(f"field {field}")
        if line is not None:
            where.append(f"line {line}")
        if offset is not None:
            where.append(f"offset {offset}")
        super().__init__(f"{reason}, {', '.join(where)}" if where else reason)

    @property
    def located(self) -> bool:
        return self.line is not None or self.offset is not None or self.field is not None


def _as_text(data: str | bytes) -> str:
    if isinstance(data, str):
        return data
    try:
        return data.decode("utf-8")
    except UnicodeDecodeError as e:
        raise ParseError("invalid UTF-8", offset=e.start) from None


def _number(tok: str, name: str, lineno: int) -> float:
    if not _NUMBER.fullmatch(tok):
        raise ParseError(f"{name} is not a number: {tok!r}", line=lineno)
    v = float(tok)
    if not math.isfinite(v):
        raise ParseError(f"{name} is not finite", line=lineno)
    return v


def _class_id(tok: str, lineno: int, num_classes: int | None) -> int:
    if not tok.isascii() or not tok.isdigit():
        raise ParseError(f"class_id is not a non-negative integer: {tok!r}", line=lineno)
    cid = int(tok)
    if num_classes is not None and cid >= num_classes:
        raise ParseError(f"class_id {cid} out of range for {num_classes} classes", line=lineno)
    return cid


def _unit(tok: str, name: str, lineno: int) -> float:
    v = _number(tok, name, lineno)
    if v < -COORD_TOL or v > 1 + COORD_TOL:
        raise ParseError(f"{name} out of range", line=lineno)
    return min(max(v, 0.0), 1.0)


def _records(text: str, width: int):
    for lineno, raw in enumerate(text.split("\n"), start=1):
        line = raw[:-1] if raw.endswith("\r") else raw
        if not line.strip() or line.startswith("#"):
            continue
        fields = line.split(" ")
        if len(fields) != width:
            raise ParseError(f"expected {width} fields, got {len(fields)}", line=lineno)
        yield lineno, fields


def _box(fields: Sequence[str], lineno: int) -> BoundingBox:
    cx, cy, w, h = (_unit(tok, name, lineno) for tok, name in zip(fields, ("cx", "cy", "w", "h")))
    return BoundingBox(cx, cy, w, h)


def parse_labels(data: str | bytes, num_classes: int | None = None) -> list[GroundTruthBox]:
    """Parse ``class_id cx cy w h`` lines."""
    text = _as_text(data)
    return [
        GroundTruthBox(_class_id(f[0], n, num_classes), _box(f[1:], n))
        for n, f in _records(text, 5)
    ]


def parse_detections(data: str | bytes, num_classes: int | None = None) -> list[Detection]:
    """Parse ``class_id confidence cx cy w h`` lines."""
    text = _as_text(data)
    out = []
    for n, f in _records(text, 6):
        cid = _class_id(f[0], n, num_classes)
        conf = _number(f[1], "confidence", n)
        if not 0.0 <= conf <= 1.0:
            raise ParseError("confidence out of range", line=n)
        out.append(Detection(cid, _box(f[2:], n), conf))
    return out


def _fmt(v: float) -> str:
    return f"{v:.6f}"


def write_labels(boxes: Sequence[GroundTruthBox]) -> str:
    return "".join(
        f"{b.class_id} {_fmt(b.box.cx)} {_fmt(b.box.cy)} {_fmt(b.box.w)} {_fmt(b.box.h)}\n" for b in boxes
    )


def write_detections(dets: Sequence[Detection]) -> str:
    return "".join(
        f"{d.class_id} {_fmt(d.confidence)} {_fmt(d.box.cx)} {_fmt(d.box.cy)} {_fmt(d.box.w)} {_fmt(d.box.h)}\n"
        for d in dets
    )


# -- P6 pixmap ---------------------------------------------------------------

_WS = b" \t\n\r\x0b\x0c"


def _header_token(data: bytes, pos: int) -> tuple[bytes, int]:
    while pos < len(data):
        ch = data[pos:pos + 1]
        if ch in _WS and ch:
            pos += 1
        elif ch == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
        else:
            break
    start = pos
    while pos < len(data) and data[pos:pos + 1] not in _WS and data[pos:pos + 1] != b"#":
        pos += 1
    if start == pos:
        raise ParseError("truncated header", offset=pos)
    return data[start:pos], pos


def read_ppm(data: bytes) -> ImageBuffer:
    if len(data) < 2:
        raise ParseError("truncated header", offset=len(data))
    if data[:2] != b"P6":
        raise ParseError(f"unsupported format {data[:2]!r}, expected P6", offset=0)
    pos = 2
    values = []
    for name in ("width", "height", "maxval"):
        tok, end = _header_token(data, pos)
        if not tok.isdigit():
            raise ParseError(f"{name} is not a positive integer", offset=pos)
        values.append(int(tok))
        pos = end
    width, height, maxval = values
    if width < 1 or height < 1:
        raise ParseError("image dimensions must be positive", offset=pos)
    if maxval != 255:
        raise ParseError(f"unsupported maxval {maxval}, expected 255", offset=pos)
    if pos >= len(data) or data[pos:pos + 1] not in _WS:
        raise ParseError("missing whitespace after header", offset=pos)
    pos += 1
    need = width * height * 3
    have = len(data) - pos
    if have < need:
        raise ParseError(f"truncated payload: {have} of {need} bytes", offset=len(data))
    if have > need:
        raise ParseError(f"{have - need} trailing bytes after payload", offset=pos + need)
    raw = np.frombuffer(data, dtype=np.uint8, count=need, offset=pos)
    return ImageBuffer(raw.reshape(height, width, 3) / 255.0)


def write_ppm(img: ImageBuffer) -> bytes:
    px = img.pixels
    if img.channels == 1:
        px = np.repeat(px, 3, axis=2)
    raw = np.floor(px * 255.0 + 0.5).astype(np.uint8)
    return f"P6\n{img.width} {img.height}\n255\n".encode("ascii") + raw.tobytes()


# -- structured text (JSON) ----------------------------------------------------


def _load_json(data: str | bytes) -> Any:
    text = _as_text(data)
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(e.msg, line=e.lineno, offset=e.pos) from None
    except RecursionError:
        raise ParseError("document nested too deeply", offset=0) from None
    except ValueError as e:
        raise ParseError(str(e), offset=0) from None


def _positive_int(doc: dict, key: str) -> int:
    v = doc.get(key)
    if isinstance(v, bool) or not isinstance(v, int) or v < 1:
        raise ParseError("must be a positive integer", field=key)
    return v


def _float_array(doc: dict, key: str) -> np.ndarray:
    vals = doc.get(key)
    if not isinstance(vals, list):
        raise ParseError("must be an array", field=key)
    for n, v in enumerate(vals):
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
            raise ParseError("not a finite number", field=f"{key}[{n}]")
    return np.asarray(vals, dtype=np.float64)


def _grid_from_doc(doc: Any) -> GridTensor:
    if not isinstance(doc, dict):
        raise ParseError("tensor document must be an object", field="$")
    s, b, c = (_positive_int(doc, k) for k in ("s", "b", "num_classes"))
    values = _float_array(doc, "values")
    expected = s * s * b * (5 + c)
    if values.size != expected:
        raise ParseError(f"{values.size} entries, expected {expected} for S={s} B={b} C={c}", field="values")
    grid = GridTensor(s, b, c, values)
    try:
        grid.check_ranges()
    except ValueError as e:
        raise ParseError(str(e), field="values") from None
    return grid


def read_tensor(data: str | bytes) -> GridTensor:
    return _grid_from_doc(_load_json(data))


def write_tensor(t: GridTensor) -> str:
    doc = {"s": t.s, "b": t.b, "num_classes": t.num_classes, "values": [float(v) for v in t.flat()]}
    return json.dumps(doc) + "\n"


def _target_from_doc(doc: Any) -> TargetTensor:
    grid = _grid_from_doc(doc)
    mask = doc.get("mask")
    want = grid.s * grid.s * grid.b
    if not isinstance(mask, list) or len(mask) != want or not all(m in (0, 1) for m in mask):
        raise ParseError(f"must be a 0/1 array of length {want}", field="mask")
    return TargetTensor(grid, np.asarray(mask, dtype=bool))


def read_training_fixture(data: str | bytes) -> tuple[list[TargetTensor], list[TargetTensor]]:
    """Parse ``{"train": [target, ...], "val": [target, ...]}``.

    Each target is a tensor document with an extra flat 0/1 ``mask`` array.
    """
    doc = _load_json(data)
    if not isinstance(doc, dict):
        raise ParseError("fixture must be an object", field="$")
    out = []
    for key in ("train", "val"):
        items = doc.get(key)
        if not isinstance(items, list) or not items:
            raise ParseError("must be a non-empty array", field=key)
        out.append([_target_from_doc(item) for item in items])
    return out[0], out[1]


@dataclass(frozen=True)
class ManifestItem:
    image: Path
    labels: Path
    detections: Path | None = None


@dataclass(frozen=True)
class DatasetManifest:
    class_names: tuple[str, ...]
    items: tuple[ManifestItem, ...]

    @property
    def num_classes(self) -> int:
        return len(self.class_names)


def parse_manifest(data: str | bytes, base_dir: Path | str = ".") -> DatasetManifest:
    """Parse a JSON manifest; relative item paths resolve against ``base_dir``."""
    doc = _load_json(data)
    base = Path(base_dir)
    if not isinstance(doc, dict):
        raise ParseError("manifest must be an object", field="$")
    names = doc.get("class_names")
    if not isinstance(names, list) or not names or not all(isinstance(n, str) and n for n in names):
        raise ParseError("must be a non-empty array of strings", field="class_names")
    raw_items = doc.get("items")
    if not isinstance(raw_items, list):
        raise ParseError("must be an array", field="items")
    items = []
    for n, it in enumerate(raw_items):
        if not isinstance(it, dict):
            raise ParseError("must be an object", field=f"items[{n}]")
        paths = {}
        for key in ("image", "labels", "detections"):
            v = it.get(key)
            if v is None and key == "detections":
                continue
            if not isinstance(v, str) or not v:
                raise ParseError("must be a non-empty path", field=f"items[{n}].{key}")
            paths[key] = base / v
        items.append(ManifestItem(paths["image"], paths["labels"], paths.get("detections")))
    return DatasetManifest(tuple(names), tuple(items))


def read_manifest(path: Path | str) -> DatasetManifest:
    path = Path(path)
    try:
        return parse_manifest(path.read_bytes(), path.parent)
    except ParseError as e:
        raise ParseError(e.reason, e.line, e.offset, str(path), e.field) from None
