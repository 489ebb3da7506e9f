"""Tensor files: a human-readable header plus a raw little-endian binary blob.

A tensor named ``x`` is stored as ``x.hdr`` (text, ``key = value`` lines) and
``x.bin`` (raw array bytes). The header records shape, dtype, endianness, the
blob filename, and free-form ``meta.*`` entries. Binary contents are
bit-exact, which the dataset determinism tests rely on.
"""

import os

import numpy as np

from .errors import FormatError

_DTYPES = {
    "f32": np.dtype("<f4"),
    "f64": np.dtype("<f8"),
    "u8": np.dtype("u1"),
}
_DTYPE_NAMES = {v: k for k, v in _DTYPES.items()}

FORMAT_TAG = "spikeflag-tensor-v1"


def dtype_name(dtype):
    dtype = np.dtype(dtype).newbyteorder("<") if np.dtype(dtype).itemsize > 1 else np.dtype(dtype)
    try:
        return _DTYPE_NAMES[dtype]
    except KeyError:
        raise FormatError(f"unsupported tensor dtype {dtype}")


def write_tensor(path_base, array, metadata=None):
    """Write ``array`` to ``path_base + '.hdr'`` / ``path_base + '.bin'``."""
    array = np.ascontiguousarray(array)
    if array.dtype == np.bool_:
        array = array.astype(np.uint8)
    name = dtype_name(array.dtype)
    array = array.astype(_DTYPES[name], copy=False)
    bin_name = os.path.basename(path_base) + ".bin"
    lines = [
        f"format = {FORMAT_TAG}",
        f"dtype = {name}",
        "shape = " + " ".join(str(n) for n in array.shape),
        "endianness = little",
        f"data_file = {bin_name}",
    ]
    for key, value in sorted((metadata or {}).items()):
        lines.append(f"meta.{key} = {value}")
    with open(path_base + ".hdr", "w") as fh:
        fh.write("\n".join(lines) + "\n")
    with open(path_base + ".bin", "wb") as fh:
        fh.write(array.tobytes())
    return path_base + ".hdr"


def parse_kv_lines(text, path="<string>"):
    """Parse ``key = value`` lines; '#' starts a comment, blank lines skipped."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise FormatError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def read_tensor(hdr_path):
    """Read a tensor file pair. Returns ``(array, metadata_dict)``."""
    try:
        with open(hdr_path) as fh:
            fields = parse_kv_lines(fh.read(), hdr_path)
    except OSError as exc:
        raise FormatError(f"cannot read tensor header {hdr_path}: {exc}")
    if fields.get("format") != FORMAT_TAG:
        raise FormatError(f"{hdr_path}: unknown format {fields.get('format')!r}")
    if fields.get("endianness", "little") != "little":
        raise FormatError(f"{hdr_path}: unsupported endianness")
    try:
        dtype = _DTYPES[fields["dtype"]]
        shape = tuple(int(n) for n in fields["shape"].split())
        bin_name = fields["data_file"]
    except (KeyError, ValueError) as exc:
        raise FormatError(f"{hdr_path}: malformed header ({exc})")
    bin_path = os.path.join(os.path.dirname(hdr_path), bin_name)
    try:
        with open(bin_path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise FormatError(f"cannot read tensor data {bin_path}: {exc}")
    expected = int(np.prod(shape)) * dtype.itemsize
    if len(raw) != expected:
        raise FormatError(
            f"{bin_path}: expected {expected} bytes for shape {shape}, got {len(raw)}"
        )
    array = np.frombuffer(raw, dtype=dtype).reshape(shape)
    meta = {k[len("meta."):]: v for k, v in fields.items() if k.startswith("meta.")}
    return array.copy(), meta
