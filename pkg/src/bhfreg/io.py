"""File formats: OBJ / ASCII PLY meshes, per-vertex field files, landmark
files, colored PLY exports, energy traces and key=value run configs.

Field file layout (plain text, one row per vertex)::

    # bhfreg-field v1 name=mu arity=2 count=812 domain=disk
    0 0.12345678901234567 -0.0012345678901234567
    1 ...

``arity`` is 1 for real fields and 2 for complex ones (re, im).  Values are
written with 17 significant digits so a write/read cycle is bit-exact.
Parameterizations are arity-2 field files with ``domain=disk`` or
``domain=sphere pole=<vertex>``; the pole row holds ``inf 0``.
"""

from __future__ import annotations

import csv
import json
import os
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import IndexOutOfRange, IoError, ParseError, ValidationError
from .mesh import DISK, SPHERE, PlanarEmbedding, TriMesh
from .registration import LandmarkSet

FIELD_MAGIC = "bhfreg-field"
FIELD_VERSION = "v1"
LANDMARK_MAGIC = "# bhfreg-landmarks v1"
COLORMAP = "viridis"


class FanSplitWarning(UserWarning):
    """A polygon with more than three corners was fan-triangulated."""


def _read_lines(path) -> list[str]:
    try:
        with open(path, encoding="utf-8") as fh:
            return fh.read().splitlines()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc.strerror or exc}") from exc
    except UnicodeDecodeError as exc:
        raise ParseError("not a text file", path=path) from exc


def _write_text(path, text: str):
    try:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc.strerror or exc}") from exc


def _num(x: float) -> str:
    return format(float(x), ".17g")


# ---------------------------------------------------------------- meshes

def _fan(poly: list[int]) -> list[tuple[int, int, int]]:
    return [(poly[0], poly[k], poly[k + 1]) for k in range(1, len(poly) - 1)]


def _parse_obj(lines, path):
    verts, faces, split = [], [], 0
    for ln, raw in enumerate(lines, 1):
        s = raw.split("#", 1)[0].split()
        if not s:
            continue
        tag = s[0]
        if tag == "v":
            if len(s) < 4:
                raise ParseError("vertex record needs three coordinates", ln, path)
            try:
                verts.append([float(t) for t in s[1:4]])
            except ValueError:
                raise ParseError(f"bad vertex coordinate in {raw.strip()!r}", ln, path) from None
        elif tag == "f":
            if len(s) < 4:
                raise ParseError("face record needs at least three vertices", ln, path)
            poly = []
            for tok in s[1:]:
                try:
                    k = int(tok.split("/", 1)[0])
                except ValueError:
                    raise ParseError(f"bad face index {tok!r}", ln, path) from None
                if k == 0:
                    raise ParseError("OBJ indices start at 1", ln, path)
                poly.append(k - 1 if k > 0 else len(verts) + k)
            if len(poly) > 3:
                split += 1
            faces += _fan(poly)
        # vt, vn, o, g, s, usemtl, mtllib and others are ignored
    return verts, faces, split


def _parse_ply(lines, path):
    if not lines or lines[0].strip() != "ply":
        raise ParseError("missing 'ply' magic", 1, path)
    elements, ln = [], 1
    fmt = None
    while True:
        if ln >= len(lines):
            raise ParseError("header has no end_header", ln, path)
        s = lines[ln].split()
        ln += 1
        if not s or s[0] in ("comment", "obj_info"):
            continue
        if s[0] == "format":
            fmt = s[1] if len(s) > 1 else ""
        elif s[0] == "element":
            if len(s) != 3:
                raise ParseError("malformed element line", ln, path)
            try:
                elements.append([s[1], int(s[2]), []])
            except ValueError:
                raise ParseError("element count is not an integer", ln, path) from None
        elif s[0] == "property":
            if not elements:
                raise ParseError("property before any element", ln, path)
            elements[-1][2].append(s[1:])
        elif s[0] == "end_header":
            break
        else:
            raise ParseError(f"unknown header keyword {s[0]!r}", ln, path)
    if fmt != "ascii":
        raise ParseError(f"only ASCII PLY is supported (format {fmt})", 2, path)
    verts, faces, split = [], [], 0
    for name, count, props in elements:
        for _ in range(count):
            while ln < len(lines) and not lines[ln].strip():
                ln += 1
            if ln >= len(lines):
                raise ParseError(f"file ends inside element {name!r}", ln, path)
            s = lines[ln].split()
            ln += 1
            if name == "vertex":
                names = [p[-1] for p in props]
                try:
                    row = dict(zip(names, (float(t) for t in s)))
                    verts.append([row["x"], row["y"], row["z"]])
                except (ValueError, KeyError):
                    raise ParseError("bad vertex row", ln, path) from None
            elif name == "face":
                try:
                    n = int(s[0])
                    poly = [int(t) for t in s[1:1 + n]]
                except (ValueError, IndexError):
                    raise ParseError("bad face row", ln, path) from None
                if n < 3 or len(poly) != n:
                    raise ParseError("face row needs a count followed by that many indices", ln, path)
                if n > 3:
                    split += 1
                faces += _fan(poly)
    return verts, faces, split


def load_mesh(path) -> TriMesh:
    """Read an OBJ or ASCII PLY triangle mesh; polygons are fan-triangulated."""
    lines = _read_lines(path)
    ext = os.path.splitext(str(path))[1].lower()
    is_ply = ext == ".ply" or (ext != ".obj" and lines and lines[0].strip() == "ply")
    verts, faces, split = (_parse_ply if is_ply else _parse_obj)(lines, path)
    if split:
        warnings.warn(f"{path}: {split} non-triangle faces fan-triangulated", FanSplitWarning, stacklevel=2)
    if not verts:
        raise ParseError("no vertices", path=path)
    return TriMesh(np.array(verts, float), np.array(faces, dtype=np.int64).reshape(-1, 3))


def save_mesh(mesh: TriMesh, path, colors: np.ndarray | None = None):
    """Write OBJ or ASCII PLY by extension; ``colors`` (V x 3 uint8) only for PLY."""
    ext = os.path.splitext(str(path))[1].lower()
    V, F = mesh.vertices, mesh.faces
    out = []
    if ext == ".obj":
        if colors is not None:
            raise ValueError("vertex colors need PLY output")
        out += [f"v {_num(x)} {_num(y)} {_num(z)}" for x, y, z in V]
        out += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in F]
    elif ext == ".ply":
        out += ["ply", "format ascii 1.0", f"element vertex {len(V)}",
                "property double x", "property double y", "property double z"]
        if colors is not None:
            out += ["property uchar red", "property uchar green", "property uchar blue"]
        out += [f"element face {len(F)}", "property list uchar int vertex_indices", "end_header"]
        for k, (x, y, z) in enumerate(V):
            row = f"{_num(x)} {_num(y)} {_num(z)}"
            if colors is not None:
                row += " %d %d %d" % tuple(colors[k])
            out.append(row)
        out += [f"3 {a} {b} {c}" for a, b, c in F]
    else:
        raise IoError(f"unknown mesh extension {ext!r} (use .obj or .ply)")
    _write_text(path, "\n".join(out) + "\n")


# ---------------------------------------------------------------- field files

@dataclass
class FieldFile:
    name: str
    values: np.ndarray
    domain: str | None = None
    pole: int | None = None

    @property
    def arity(self) -> int:
        return 2 if np.iscomplexobj(self.values) else 1

    @property
    def count(self) -> int:
        return len(self.values)


def write_field(path, values, name: str = "field", domain: str | None = None, pole: int | None = None):
    values = np.asarray(values)
    if values.ndim != 1:
        raise ValidationError("field must be one value per vertex")
    complex_ = np.iscomplexobj(values)
    head = f"# {FIELD_MAGIC} {FIELD_VERSION} name={name} arity={2 if complex_ else 1} count={len(values)}"
    if domain is not None:
        head += f" domain={domain}"
    if pole is not None:
        head += f" pole={int(pole)}"
    rows = [head]
    if complex_:
        rows += [f"{i} {_num(v.real)} {_num(v.imag)}" for i, v in enumerate(values)]
    else:
        rows += [f"{i} {_num(v)}" for i, v in enumerate(values.astype(float))]
    _write_text(path, "\n".join(rows) + "\n")


def read_field(path) -> FieldFile:
    lines = _read_lines(path)
    if not lines:
        raise ParseError("empty field file", 1, path)
    head = lines[0].split()
    if len(head) < 3 or head[0] != "#" or head[1] != FIELD_MAGIC:
        raise ParseError(f"missing '# {FIELD_MAGIC}' header", 1, path)
    if head[2] != FIELD_VERSION:
        raise ParseError(f"unsupported field file version {head[2]!r}", 1, path)
    meta = {}
    for tok in head[3:]:
        if "=" not in tok:
            raise ParseError(f"header token {tok!r} is not key=value", 1, path)
        k, v = tok.split("=", 1)
        meta[k] = v
    try:
        arity = int(meta["arity"])
        count = int(meta["count"])
        pole = int(meta["pole"]) if "pole" in meta else None
    except KeyError as exc:
        raise ParseError(f"header lacks {exc.args[0]}=", 1, path) from None
    except ValueError:
        raise ParseError("arity, count and pole must be integers", 1, path) from None
    if arity not in (1, 2):
        raise ParseError(f"arity must be 1 or 2, got {arity}", 1, path)
    data = np.empty((count, arity))
    n = 0
    for ln, raw in enumerate(lines[1:], 2):
        s = raw.split()
        if not s or s[0].startswith("#"):
            continue
        if len(s) != 1 + arity:
            raise ParseError(f"expected {1 + arity} columns, got {len(s)}", ln, path)
        try:
            idx = int(s[0])
            vals = [float(t) for t in s[1:]]
        except ValueError:
            raise ParseError(f"bad row {raw.strip()!r}", ln, path) from None
        if idx != n:
            raise ParseError(f"vertex index {idx} out of order (expected {n})", ln, path)
        if n >= count:
            raise ParseError(f"more rows than the declared count {count}", ln, path)
        data[n] = vals
        n += 1
    if n != count:
        raise ParseError(f"{n} rows but header declares count={count}", len(lines), path)
    values = data[:, 0] + 1j * data[:, 1] if arity == 2 else data[:, 0]
    return FieldFile(meta.get("name", "field"), values, meta.get("domain"), pole)


def load_field(path, n_vertices: int | None = None, arity: int | None = None) -> np.ndarray:
    """Values of a field file, checked against a vertex count and arity."""
    ff = read_field(path)
    if n_vertices is not None and ff.count != n_vertices:
        raise ValidationError(f"{path}: field has {ff.count} rows for a mesh with {n_vertices} vertices")
    if arity is not None and ff.arity != arity:
        raise ValidationError(f"{path}: expected arity {arity}, got {ff.arity}")
    return ff.values


def load_param(path, mesh: TriMesh) -> PlanarEmbedding:
    """Parameterization from an arity-2 field file with a declared domain."""
    ff = read_field(path)
    if ff.arity != 2:
        raise ValidationError(f"{path}: parameterization must have arity 2")
    if ff.count != mesh.n_vertices:
        raise ValidationError(f"{path}: {ff.count} coordinates for a mesh with {mesh.n_vertices} vertices")
    if ff.domain not in (DISK, SPHERE):
        raise ValidationError(f"{path}: header must declare domain=disk or domain=sphere")
    pole = ff.pole
    if ff.domain == SPHERE and pole is None:
        inf = np.flatnonzero(~np.isfinite(ff.values))
        if len(inf) != 1:
            raise ValidationError(f"{path}: sphere parameterization needs pole= or exactly one infinite row")
        pole = int(inf[0])
    if pole is not None and not 0 <= pole < mesh.n_vertices:
        raise ValidationError(f"{path}: pole {pole} is not a vertex", [pole])
    return PlanarEmbedding(mesh, ff.values, ff.domain, pole)


def save_param(path, embed: PlanarEmbedding):
    c = embed.coords.copy()
    if embed.pole is not None:
        c[embed.pole] = complex(np.inf, 0)
    write_field(path, c, "param", embed.domain, embed.pole)


# ---------------------------------------------------------------- landmarks

def load_landmarks(path, n_vertices: int | None = None) -> LandmarkSet:
    """Landmark curves: blank-line separated blocks of ``index target_re target_im``."""
    curves, cur = [], []
    for ln, raw in enumerate(_read_lines(path) + [""], 1):
        s = raw.split("#", 1)[0].split()
        if not s:
            if cur:
                curves.append(cur)
                cur = []
            continue
        if len(s) != 3:
            raise ParseError("landmark rows are 'index target_re target_im'", ln, path)
        try:
            i, re, im = int(s[0]), float(s[1]), float(s[2])
        except ValueError:
            raise ParseError(f"bad landmark row {raw.strip()!r}", ln, path) from None
        if i < 0 or (n_vertices is not None and i >= n_vertices):
            raise IndexOutOfRange(f"{path}:{ln}: landmark index {i} outside 0..{(n_vertices or 0) - 1}")
        cur.append((i, complex(re, im)))
    return LandmarkSet([([i for i, _ in c], [t for _, t in c]) for c in curves])


def save_landmarks(path, landmarks: LandmarkSet):
    rows = [LANDMARK_MAGIC]
    for idx, tgt in landmarks.curves:
        rows += [f"{i} {_num(t.real)} {_num(t.imag)}" for i, t in zip(idx, tgt)]
        rows.append("")
    _write_text(path, "\n".join(rows) + "\n")


# ---------------------------------------------------------------- exports

def field_colors(values, cmap: str = COLORMAP):
    """RGB bytes from a monotone colormap over [min, max]; constant fields map to its low end."""
    from matplotlib import colormaps

    v = np.asarray(values, float)
    lo, hi = float(v.min()), float(v.max())
    t = (v - lo) / (hi - lo) if hi > lo else np.zeros_like(v)
    rgb = (colormaps[cmap](t)[:, :3] * 255).round().astype(np.uint8)
    return rgb, lo, hi


def export_field(field_, mesh: TriMesh, path, mode: str = "csv", name: str = "field"):
    """Write a per-vertex field as a field file or as a colored ASCII PLY.

    ``ply-color`` colors |field| for complex input and records min/max in a
    ``<path>.json`` sidecar.
    """
    v = np.asarray(field_)
    if v.shape != (mesh.n_vertices,):
        raise ValidationError(f"field length {len(v)} does not match {mesh.n_vertices} vertices")
    if mode == "csv":
        write_field(path, v, name)
    elif mode == "ply-color":
        mag = np.abs(v) if np.iscomplexobj(v) else v.astype(float)
        rgb, lo, hi = field_colors(mag)
        save_mesh(mesh, path, colors=rgb)
        side = {"name": name, "colormap": COLORMAP, "min": lo, "max": hi, "count": int(len(v)),
                "magnitude": bool(np.iscomplexobj(v))}
        _write_text(str(path) + ".json", json.dumps(side, indent=2) + "\n")
    else:
        raise ValueError("mode must be 'csv' or 'ply-color'")


def write_trace(path, trace: list[dict]):
    """Energy trace CSV; columns are the union of row keys in first-seen order."""
    keys = []
    for row in trace:
        keys += [k for k in row if k not in keys]
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.DictWriter(fh, fieldnames=keys)
            w.writeheader()
            for row in trace:
                w.writerow({k: (_num(v) if isinstance(v, float) else v) for k, v in row.items()})
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc.strerror or exc}") from exc


def read_trace(path) -> list[dict]:
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc.strerror or exc}") from exc
    return [{k: (float(v) if v not in ("", None) else None) for k, v in r.items()} for r in rows]


# ---------------------------------------------------------------- run config

def read_config(path) -> dict[str, str]:
    """Flat ``key = value`` file; '#' starts a comment."""
    out = {}
    for ln, raw in enumerate(_read_lines(path), 1):
        s = raw.split("#", 1)[0].strip()
        if not s:
            continue
        if "=" not in s:
            raise ParseError(f"expected key=value, got {s!r}", ln, path)
        k, v = (t.strip() for t in s.split("=", 1))
        if not k:
            raise ParseError("empty key", ln, path)
        out[k.replace("-", "_")] = v
    return out


def write_config(path, values: dict):
    rows = ["# bhfreg-config v1"] + [f"{k} = {v}" for k, v in values.items() if v is not None]
    _write_text(path, "\n".join(rows) + "\n")
