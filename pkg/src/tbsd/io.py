"""Image, mask, basis and config file helpers.  All writes are atomic."""

from __future__ import annotations

import configparser
import io
import json
import os
import tempfile
from pathlib import Path

import numpy as np
from PIL import Image

from .texture_learning import TextureBasis

BASIS_VERSION = 1
LUMA = (0.299, 0.587, 0.114)


def atomic_write(path, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _to_gray(img: Image.Image) -> np.ndarray:
    mode = img.mode
    if mode in ("I;16", "I;16B", "I;16L", "I;16N"):
        return np.asarray(img, dtype=np.float64) / 65535.0
    if mode == "I":
        a = np.asarray(img, dtype=np.float64)
        return a / (65535.0 if a.max(initial=0) > 255 else 255.0)
    if mode == "F":
        return np.asarray(img, dtype=np.float64)
    if mode == "1":
        return np.asarray(img, dtype=np.float64)
    if mode == "L":
        return np.asarray(img, dtype=np.float64) / 255.0
    if mode == "LA":
        return np.asarray(img, dtype=np.float64)[..., 0] / 255.0
    rgb = np.asarray(img.convert("RGB"), dtype=np.float64) / 255.0
    return rgb @ np.array(LUMA)


def read_image(path) -> np.ndarray:
    """Grayscale intensities in ``[0, 1]``; colour is reduced by luminance weights."""
    with Image.open(path) as img:
        img.load()
        return np.clip(_to_gray(img), 0.0, 1.0)


def _png_bytes(img: Image.Image) -> bytes:
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return buf.getvalue()


def write_png(path, values, bits: int = 16) -> None:
    """Write ``[0, 1]`` intensities (clipped) as an 8- or 16-bit grayscale PNG."""
    a = np.clip(np.asarray(values, dtype=float), 0.0, 1.0)
    if bits == 16:
        img = Image.fromarray(np.round(a * 65535).astype(np.uint16))
    elif bits == 8:
        img = Image.fromarray(np.round(a * 255).astype(np.uint8), mode="L")
    else:
        raise ValueError("bits must be 8 or 16")
    atomic_write(path, _png_bytes(img))


def write_component(path, values) -> dict:
    """Min-max rescale an arbitrary real component into an 8-bit PNG.

    Returns ``{"offset", "scale"}`` with ``value = offset + scale * pixel / 255``.
    """
    a = np.asarray(values, dtype=float)
    lo, hi = float(a.min(initial=0.0)), float(a.max(initial=0.0))
    scale = hi - lo
    norm = (a - lo) / scale if scale > 0 else np.zeros_like(a)
    write_png(path, norm, bits=8)
    return {"offset": lo, "scale": scale}


def write_mask(path, mask) -> None:
    m = np.asarray(mask, dtype=bool)
    atomic_write(path, _png_bytes(Image.fromarray(np.where(m, 255, 0).astype(np.uint8), mode="L")))


def read_mask(path) -> np.ndarray:
    return read_image(path) > 0.5


def write_json(path, obj) -> None:
    # repr-based float formatting round-trips every double exactly
    atomic_write(path, (json.dumps(obj, indent=2, allow_nan=True) + "\n").encode())


def read_json(path):
    with open(path) as fh:
        return json.load(fh)


def basis_to_dict(basis: TextureBasis) -> dict:
    return {
        "version": BASIS_VERSION,
        "patch_shape": list(basis.patch_shape),
        "directions_deg": list(basis.directions_deg),
        "atoms": basis.atoms.T.tolist(),
        "source": basis.source,
    }


def basis_from_dict(d: dict) -> TextureBasis:
    if d.get("version") != BASIS_VERSION:
        raise ValueError(f"unsupported basis file version {d.get('version')!r}")
    h, w = (int(v) for v in d["patch_shape"])
    atoms = np.asarray(d["atoms"], dtype=float).reshape(-1, h * w).T
    return TextureBasis(atoms, (h, w), tuple(d.get("directions_deg", ())), d.get("source", ""))


def save_basis(path, basis: TextureBasis) -> None:
    write_json(path, basis_to_dict(basis))


def load_basis(path) -> TextureBasis:
    return basis_from_dict(read_json(path))


def read_config(path) -> dict[str, str]:
    """Flat ``key = value`` file; ``#`` and ``;`` start comments."""
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    text = Path(path).read_text()
    parser.read_string("[tbsd]\n" + text)
    return dict(parser["tbsd"])
