"""Scene description files and the binary tensor container.

Scene files are INI-style text::

    [afdm]
    n_sub = 256
    alpha_max = 1
    k_v = 3
    ell_max = 12
    l_cpp = 12
    c2 = 0
    delta_f = 30000
    fc = 60e9

    [array]
    k_tx = 8
    gx = 50
    # d_rx, d_tx optional (metres); default lambda/4 and lambda/2

    [target.1]
    theta = 0.349      # rad
    phi = -0.436       # rad
    range = 4.0        # metres, or inf
    tau = 4.43e-7      # s   (or: beta = normalized delay)
    f_d = 18000        # Hz  (or: nu = normalized Doppler)
    gamma = (1+0j)

    [frame]            # optional: transmit frame used by simulate/crlb
    qam_order = 16
    seed = 0

Tensor files hold a magic tag, three little-endian uint64 dimensions and the
``[g, m, k]`` cube as C-ordered little-endian complex128.
"""

from __future__ import annotations

import configparser
import math
from pathlib import Path

import numpy as np

from .channel import SceneConfig, Target, check_target
from .waveform import AfdmConfig

TENSOR_MAGIC = b"AFDMCUB1"


class SceneFormatError(ValueError):
    pass


def _get(sec, key, conv, default=None):
    if key not in sec:
        if default is None:
            raise SceneFormatError(f"[{sec.name}] is missing '{key}'")
        return default
    try:
        return conv(sec[key])
    except ValueError as exc:
        raise SceneFormatError(f"[{sec.name}] {key}: {exc}") from None


def parse_scene_text(text: str) -> tuple[SceneConfig, AfdmConfig, dict]:
    """Parse scene text into ``(scene, cfg, frame_opts)``."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise SceneFormatError(str(exc)) from None
    if "afdm" not in cp or "array" not in cp:
        raise SceneFormatError("scene needs [afdm] and [array] sections")
    a = cp["afdm"]
    cfg = AfdmConfig(
        n_sub=_get(a, "n_sub", int, 256), alpha_max=_get(a, "alpha_max", int, 1),
        k_v=_get(a, "k_v", int, 3), ell_max=_get(a, "ell_max", int, 12),
        l_cpp=_get(a, "l_cpp", int, 12), c2=_get(a, "c2", float, 0.0),
        delta_f=_get(a, "delta_f", float, 30e3), fc=_get(a, "fc", float, 60e9))
    cfg.validate()
    arr = cp["array"]
    targets = []
    names = sorted((s for s in cp.sections() if s.startswith("target.")),
                   key=lambda s: int(s.split(".", 1)[1]) if s.split(".", 1)[1].isdigit() else s)
    for name in names:
        t = cp[name]
        if "tau" in t:
            tau = _get(t, "tau", float)
        else:
            tau = _get(t, "beta", float) * cfg.ts
        if "f_d" in t:
            f_d = _get(t, "f_d", float)
        else:
            f_d = _get(t, "nu", float) * cfg.delta_f
        targets.append(Target(theta=_get(t, "theta", float), phi=_get(t, "phi", float),
                              tau=tau, f_d=f_d, gamma=_get(t, "gamma", complex, 1 + 0j),
                              range=_get(t, "range", float, math.inf)))
    if not targets:
        raise SceneFormatError("scene has no [target.N] sections")
    d_rx = float(arr["d_rx"]) if "d_rx" in arr else None
    d_tx = float(arr["d_tx"]) if "d_tx" in arr else None
    scene = SceneConfig(fc=cfg.fc, k_tx=_get(arr, "k_tx", int, 8), gx=_get(arr, "gx", int, 50),
                        targets=tuple(targets), d_rx=d_rx, d_tx=d_tx)
    frame = {"qam_order": 16, "seed": 0}
    if "frame" in cp:
        f = cp["frame"]
        frame = {"qam_order": _get(f, "qam_order", int, 16), "seed": _get(f, "seed", int, 0)}
    for t in scene.targets:
        try:
            check_target(t, scene, cfg)
        except ValueError as exc:
            raise SceneFormatError(str(exc)) from None
    return scene, cfg, frame


def load_scene(path) -> tuple[SceneConfig, AfdmConfig, dict]:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"scene file not found: {path}")
    return parse_scene_text(path.read_text())


def format_scene(scene: SceneConfig, cfg: AfdmConfig, frame: dict | None = None) -> str:
    """Serialize a scene; floats are written with ``repr`` so they round-trip exactly."""
    lines = ["[afdm]",
             f"n_sub = {cfg.n_sub}", f"alpha_max = {cfg.alpha_max}", f"k_v = {cfg.k_v}",
             f"ell_max = {cfg.ell_max}", f"l_cpp = {cfg.l_cpp}", f"c2 = {float(cfg.c2)!r}",
             f"delta_f = {cfg.delta_f!r}", f"fc = {cfg.fc!r}", "",
             "[array]", f"k_tx = {scene.k_tx}", f"gx = {scene.gx}",
             f"d_rx = {scene.d_rx!r}", f"d_tx = {scene.d_tx!r}", ""]
    for i, t in enumerate(scene.targets, 1):
        lines += [f"[target.{i}]", f"theta = {t.theta!r}", f"phi = {t.phi!r}",
                  f"range = {'inf' if t.far_field else repr(t.range)}",
                  f"tau = {t.tau!r}", f"f_d = {t.f_d!r}", f"gamma = {complex(t.gamma)!r}", ""]
    if frame is not None:
        lines += ["[frame]", f"qam_order = {frame['qam_order']}", f"seed = {frame['seed']}", ""]
    return "\n".join(lines)


def save_scene(path, scene: SceneConfig, cfg: AfdmConfig, frame: dict | None = None) -> None:
    Path(path).write_text(format_scene(scene, cfg, frame))


def write_tensor(path, y: np.ndarray) -> None:
    y = np.asarray(y)
    if y.ndim != 3:
        raise ValueError("expected a third-order tensor")
    with open(path, "wb") as fh:
        fh.write(TENSOR_MAGIC)
        fh.write(np.asarray(y.shape, dtype="<u8").tobytes())
        fh.write(np.ascontiguousarray(y, dtype="<c16").tobytes())


def read_tensor(path) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:8] != TENSOR_MAGIC:
        raise ValueError(f"{path}: not a tensor file")
    dims = tuple(int(d) for d in np.frombuffer(data, dtype="<u8", count=3, offset=8))
    body = np.frombuffer(data, dtype="<c16", offset=32)
    if body.size != int(np.prod(dims)):
        raise ValueError(f"{path}: size does not match header {dims}")
    return body.reshape(dims).astype(complex)


__all__ = [
    "TENSOR_MAGIC", "SceneFormatError", "parse_scene_text", "load_scene", "format_scene",
    "save_scene", "write_tensor", "read_tensor",
]
