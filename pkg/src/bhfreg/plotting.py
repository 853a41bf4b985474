"""PNG figures for runs: energy traces, per-vertex fields on the parameter
domain and deformed parameter meshes.  Uses matplotlib's object API
(no pyplot state, no display needed)."""

from __future__ import annotations

import numpy as np
from matplotlib.figure import Figure
from matplotlib.tri import Triangulation

from .mesh import DISK, PlanarEmbedding

# sphere charts are cropped to this radius so the pole ring does not dominate
SPHERE_VIEW = 3.0


def _planar_tri(embed: PlanarEmbedding, coords=None):
    z = embed.coords if coords is None else np.asarray(coords)
    F = embed.mesh.faces[embed.active_faces]
    if embed.domain != DISK:
        F = F[(np.abs(z[F]) < SPHERE_VIEW).all(1)]
    zz = np.where(np.isfinite(z), z, 0)
    return Triangulation(zz.real, zz.imag, F)


def _frame(ax, embed):
    ax.set_aspect("equal")
    if embed.domain == DISK:
        t = np.linspace(0, 2 * np.pi, 200)
        ax.plot(np.cos(t), np.sin(t), color="0.6", lw=0.6)
    else:
        ax.set_xlim(-SPHERE_VIEW, SPHERE_VIEW)
        ax.set_ylim(-SPHERE_VIEW, SPHERE_VIEW)
    ax.set_xticks([])
    ax.set_yticks([])


def plot_trace(trace: list[dict], path, title: str = "energy"):
    """Total energy and every component against iteration (log scale when positive)."""
    skip = {"iteration", "dt", "sup_mu", "flipped", "landmark_err"}
    it = np.array([r["iteration"] for r in trace])
    fig = Figure(figsize=(6, 4))
    ax = fig.add_subplot()
    keys = ["total"] + [k for k in trace[0] if k not in skip and k != "total"] if trace else []
    positive = True
    for k in keys:
        y = np.array([r.get(k, np.nan) for r in trace], float)
        positive &= bool(np.all(y[np.isfinite(y)] > 0))
        ax.plot(it, y, lw=2 if k == "total" else 1, label=k.replace("_", " "))
    if positive and keys:
        ax.set_yscale("log")
    ax.set_xlabel("iteration")
    ax.set_ylabel("energy")
    ax.set_title(title)
    if keys:
        ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)


def plot_field(embed: PlanarEmbedding, values, path, title: str = "", cmap: str = "viridis",
               coords=None):
    """Per-vertex scalar (|.| of complex input) on the parameter domain."""
    v = np.asarray(values)
    v = np.abs(v) if np.iscomplexobj(v) else v.astype(float)
    v = np.where(np.isfinite(v), v, 0)
    fig = Figure(figsize=(5, 4.4))
    ax = fig.add_subplot()
    im = ax.tripcolor(_planar_tri(embed, coords), v, shading="gouraud", cmap=cmap)
    fig.colorbar(im, ax=ax, shrink=0.8)
    _frame(ax, embed)
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)


def plot_map(embed: PlanarEmbedding, values, path, title: str = "map", landmarks=None):
    """Image of the parameter mesh under a map, with optional landmark targets."""
    fig = Figure(figsize=(5, 5))
    ax = fig.add_subplot()
    ax.triplot(_planar_tri(embed, values), color="0.25", lw=0.3)
    if landmarks is not None:
        for idx, tgt in landmarks.curves:
            ax.plot(tgt.real, tgt.imag, "r-", lw=1.2)
            ax.plot(np.asarray(values)[idx].real, np.asarray(values)[idx].imag, "b.", ms=3)
    _frame(ax, embed)
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
