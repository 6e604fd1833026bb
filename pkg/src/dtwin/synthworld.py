"""Deterministic parametric avatar world and the ``synthetic`` backends.

Each rendered head carries a 3-row fiducial tag at its centre::

    row 0  ID magic   | identity z (8) | glasses | head shape
    row 1  MOTION mag | yaw | pitch | expression (4)
    row 2  GEOM magic | 2*cx | 2*cy | 4*ax | 4*ay        (16-bit, hi/lo)

Magic pixels use only 0/255 channel values, which the face renderer never
produces. A value cell stores ``(q, 255 - q, 128)`` for an 8-bit code ``q``,
so decoding is exact up to 8-bit quantization and corrupted or absent tags
decode to nothing. Because the tag sits inside the head ellipse, it is always
covered by the face mask and regenerated by the inpainter.
"""

from __future__ import annotations

import hashlib
from pathlib import Path
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .core import EXPRESSION_DIM, IDENTITY_DIM, FrameImage, VideoClip
from .errors import BackendFailure, DimsTooSmall
from .media_io import BEHAVIORS, BehaviorTag, DatasetManifest, ManifestEntry, save_clip, write_manifest

IDENTITY_LATENT_DIM = 8
EXPRESSION_LATENT_DIM = 4
YAW_RANGE = 45.0
PITCH_RANGE = 30.0
MIN_DIM = 32
MIN_LATENT_DISTANCE = 0.5
QUANT = 1.0 / 255.0

HEAD_SHAPES = ("round", "oval", "long")
# semi-axes as fractions of the avatar's base size
SHAPE_AXES = {"round": (0.31, 0.31), "oval": (0.28, 0.35), "long": (0.26, 0.38)}
BACKGROUNDS = ((96, 120, 160), (170, 160, 120), (90, 140, 100), (150, 150, 150))

EYE_RGB = (30, 30, 45)
BROW_RGB = (60, 42, 30)
MOUTH_RGB = (150, 40, 55)
GLASSES_RGB = (52, 52, 52)

MAGIC_ID = ((255, 0, 255), (0, 255, 0), (255, 255, 0), (0, 0, 255))
MAGIC_MOTION = ((0, 255, 255), (255, 0, 0), (0, 0, 255), (255, 255, 0))
MAGIC_GEOM = ((255, 255, 0), (0, 0, 255), (255, 0, 255), (0, 255, 0))
TAG_WIDTH = 4 + IDENTITY_LATENT_DIM + 2
VALUE_BLUE = 128


@dataclass(frozen=True, eq=False)
class IdentityLatent:
    z: np.ndarray

    def __post_init__(self):
        z = np.asarray(self.z, dtype=np.float64).reshape(-1)
        if z.size != IDENTITY_LATENT_DIM:
            raise ValueError(f"identity latent must have {IDENTITY_LATENT_DIM} entries")
        if np.any(z < 0.0) or np.any(z > 1.0):
            raise ValueError("identity latent entries must lie in [0, 1]")
        object.__setattr__(self, "z", z)


@dataclass(frozen=True, eq=False)
class MotionLatent:
    yaw: float
    pitch: float
    expression: np.ndarray

    def __post_init__(self):
        e = np.asarray(self.expression, dtype=np.float64).reshape(-1)
        if e.size != EXPRESSION_LATENT_DIM:
            raise ValueError(f"expression latent must have {EXPRESSION_LATENT_DIM} entries")
        if abs(self.yaw) > YAW_RANGE or abs(self.pitch) > PITCH_RANGE:
            raise ValueError("pose outside the renderable range")
        if np.any(e < 0.0) or np.any(e > 1.0):
            raise ValueError("expression entries must lie in [0, 1]")
        object.__setattr__(self, "yaw", float(self.yaw))
        object.__setattr__(self, "pitch", float(self.pitch))
        object.__setattr__(self, "expression", e)

    def normalized(self) -> np.ndarray:
        """All six motion entries mapped to [0, 1], the units the tag stores."""
        return np.concatenate(
            [[(self.yaw + YAW_RANGE) / (2 * YAW_RANGE), (self.pitch + PITCH_RANGE) / (2 * PITCH_RANGE)], self.expression]
        )


NEUTRAL_MOTION = MotionLatent(0.0, 0.0, np.full(EXPRESSION_LATENT_DIM, 0.5))


@dataclass(frozen=True)
class AppearanceAttrs:
    glasses: bool = False
    head_shape: str = "oval"
    background: int = 0

    def __post_init__(self):
        if self.head_shape not in HEAD_SHAPES:
            raise ValueError(f"unknown head shape {self.head_shape!r}")


@dataclass(frozen=True, eq=False)
class AvatarTrajectory:
    identity: IdentityLatent
    motion: tuple
    appearance_attrs: AppearanceAttrs = AppearanceAttrs()
    behavior: BehaviorTag = BehaviorTag.UNSPECIFIED

    def __post_init__(self):
        object.__setattr__(self, "motion", tuple(self.motion))
        if len(self.motion) < 1:
            raise ValueError("a trajectory needs at least one frame")

    def __len__(self):
        return len(self.motion)


@dataclass(frozen=True, eq=False)
class Avatar:
    """One head placed in a scene. ``center`` defaults to the frame centre,
    ``scale`` multiplies the frame's shorter side to give the base size."""

    identity: IdentityLatent
    motion: MotionLatent
    attrs: AppearanceAttrs = AppearanceAttrs()
    center: Optional[tuple[float, float]] = None
    scale: float = 1.0


@dataclass(frozen=True, eq=False)
class Tag:
    identity: IdentityLatent
    motion: MotionLatent
    attrs: AppearanceAttrs
    center: tuple[float, float]
    axes: tuple[float, float]
    origin: tuple[int, int]

    @property
    def area(self) -> float:
        return self.axes[0] * self.axes[1]


# ------------------------------------------------------------- rendering


def _quantize(v) -> np.ndarray:
    return np.clip(np.round(np.asarray(v, dtype=np.float64) * 255.0), 0, 255).astype(np.int64)


def head_axes(dims: tuple[int, int], shape: str, scale: float = 1.0) -> tuple[float, float]:
    base = scale * min(dims)
    fx, fy = SHAPE_AXES[shape]
    return fx * base, fy * base


def _fill(canvas, region, rgb):
    canvas[region] = rgb


def _ellipse(xx, yy, cx, cy, rx, ry):
    return ((xx - cx) / rx) ** 2 + ((yy - cy) / ry) ** 2 <= 1.0


def face_geometry(identity: IdentityLatent, motion: MotionLatent, center, axes) -> dict:
    """Feature placement in pixel coordinates; exposed for geometry checks."""
    z, e = identity.z, motion.expression
    cx, cy = center
    ax, ay = axes
    dx = (motion.yaw / YAW_RANGE) * 0.3 * ax
    dy = (motion.pitch / PITCH_RANGE) * 0.2 * ay
    spacing = (0.32 + 0.12 * z[3]) * ax
    eye_rx = (0.10 + 0.05 * z[6]) * ax
    eye_y = cy - 0.2 * ay + dy
    return {
        "eye_left": (cx - spacing + dx, eye_y),
        "eye_right": (cx + spacing + dx, eye_y),
        "eye_radii": (eye_rx, eye_rx * (0.35 + 0.65 * e[3])),
        "brow_y": eye_y - eye_rx * (1.6 + 1.2 * e[2]),
        "brow_radii": (eye_rx * 1.3, max(0.6, 0.025 * ay * (1 + z[7]))),
        "nose": (cx + 0.9 * dx, cy + 0.05 * ay + dy, (0.06 + 0.04 * z[4]) * ax, (0.12 + 0.08 * z[4]) * ay),
        "mouth": (
            cx + 0.8 * dx,
            cy + 0.45 * ay + dy,
            (0.25 + 0.12 * z[5]) * ax * (0.7 + 0.6 * e[1]),
            0.03 * ay + 0.14 * ay * e[0],
        ),
    }


def skin_rgb(identity: IdentityLatent) -> tuple[int, int, int]:
    z = identity.z
    return (int(round(90 + 120 * z[0])), int(round(70 + 110 * z[1])), int(round(60 + 100 * z[2])))


def _write_cells(canvas, y, x, magic, codes):
    for i, rgb in enumerate(magic):
        canvas[y, x + i] = rgb
    for i, q in enumerate(codes):
        canvas[y, x + 4 + i] = (q, 255 - q, VALUE_BLUE)


def _split16(v: float) -> list[int]:
    q = int(round(v))
    if not 0 <= q < 65536:
        raise ValueError("geometry value does not fit the tag")
    return [q >> 8, q & 0xFF]


def _draw_avatar(canvas, identity, motion, attrs, center, axes):
    h, w = canvas.shape[:2]
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    cx, cy = center
    ax, ay = axes
    head = _ellipse(xx, yy, cx, cy, ax, ay)
    _fill(canvas, head, skin_rgb(identity))
    g = face_geometry(identity, motion, center, axes)
    skin = np.array(skin_rgb(identity), dtype=np.float64)
    nx, ny, nrx, nry = g["nose"]
    _fill(canvas, head & _ellipse(xx, yy, nx, ny, nrx, nry), tuple(int(v) for v in np.round(skin * 0.8)))
    erx, ery = g["eye_radii"]
    brx, bry = g["brow_radii"]
    for ex, ey in (g["eye_left"], g["eye_right"]):
        if attrs.glasses:
            r = np.hypot(xx - ex, yy - ey)
            _fill(canvas, head & (r >= 1.7 * erx) & (r <= 1.7 * erx + max(1.0, 0.03 * ax)), GLASSES_RGB)
        _fill(canvas, head & _ellipse(xx, yy, ex, g["brow_y"], brx, bry), BROW_RGB)
        _fill(canvas, head & _ellipse(xx, yy, ex, ey, erx, ery), EYE_RGB)
    if attrs.glasses:
        (lx, ly), (rx_, _) = g["eye_left"], g["eye_right"]
        bridge = (np.abs(yy - ly) <= 0.6) & (xx >= lx + 1.7 * erx) & (xx <= rx_ - 1.7 * erx)
        _fill(canvas, head & bridge, GLASSES_RGB)
    mx, my, mrx, mry = g["mouth"]
    _fill(canvas, head & _ellipse(xx, yy, mx, my, mrx, mry), MOUTH_RGB)

    x0 = int(round(cx)) - TAG_WIDTH // 2
    y0 = int(round(cy)) - 1
    if x0 < 0 or y0 < 0 or x0 + TAG_WIDTH > w or y0 + 3 > h:
        raise DimsTooSmall("avatar too close to the frame edge for its fiducial tag")
    _write_cells(
        canvas, y0, x0, MAGIC_ID,
        list(_quantize(identity.z)) + [int(attrs.glasses), HEAD_SHAPES.index(attrs.head_shape)],
    )
    _write_cells(canvas, y0 + 1, x0, MAGIC_MOTION, list(_quantize(motion.normalized())))
    geom = _split16(2 * cx) + _split16(2 * cy) + _split16(4 * ax) + _split16(4 * ay)
    _write_cells(canvas, y0 + 2, x0, MAGIC_GEOM, geom)


def render_scene(avatars: Sequence[Avatar], dims: tuple[int, int], background=(96, 120, 160)) -> FrameImage:
    """Render avatars in order (later ones on top) over a flat background."""
    w, h = dims
    if w < MIN_DIM or h < MIN_DIM:
        raise DimsTooSmall(f"frames must be at least {MIN_DIM}x{MIN_DIM}, got {w}x{h}")
    canvas = np.empty((h, w, 3), dtype=np.uint8)
    canvas[...] = background
    for av in avatars:
        center = av.center if av.center is not None else ((w - 1) / 2.0, (h - 1) / 2.0)
        if av.scale * min(dims) < MIN_DIM:
            raise DimsTooSmall("avatar scale too small for its fiducial tag")
        _draw_avatar(canvas, av.identity, av.motion, av.attrs, center, head_axes(dims, av.attrs.head_shape, av.scale))
    return FrameImage(canvas.astype(np.float64) / 255.0)


def render_frame(
    identity: IdentityLatent,
    motion: MotionLatent,
    dims: tuple[int, int],
    attrs: AppearanceAttrs = AppearanceAttrs(),
    frame_index: int = 0,
) -> FrameImage:
    """Render a single centred avatar. ``dims`` is (W, H)."""
    frame = render_scene([Avatar(identity, motion, attrs)], dims, BACKGROUNDS[attrs.background % len(BACKGROUNDS)])
    return FrameImage(frame.pixels, frame_index)


# -------------------------------------------------------------- decoding


def _to_uint8(pixels: np.ndarray) -> np.ndarray:
    return np.clip(np.round(np.asarray(pixels, dtype=np.float64) * 255.0), 0, 255).astype(np.int64)


def _read_codes(u8, y, x, n):
    cells = u8[y, x + 4: x + 4 + n]
    if cells.shape[0] != n:
        return None
    r, g, b = cells[:, 0], cells[:, 1], cells[:, 2]
    if np.any(g != 255 - r) or np.any(b != VALUE_BLUE):
        return None
    return r


def _magic_at(u8, y, x, magic) -> bool:
    return bool(np.all(u8[y, x: x + 4] == np.array(magic)))


def decode_tags(pixels: np.ndarray) -> list[Tag]:
    """Every valid fiducial tag in the frame, in raster order."""
    u8 = _to_uint8(pixels)
    h, w = u8.shape[:2]
    if h < 3 or w < TAG_WIDTH:
        return []
    hits = np.ones((h - 2, w - TAG_WIDTH + 1), dtype=bool)
    for i, rgb in enumerate(MAGIC_ID):
        hits &= np.all(u8[: h - 2, i: i + w - TAG_WIDTH + 1] == np.array(rgb), axis=-1)
    tags = []
    for y, x in zip(*np.nonzero(hits)):
        if not (_magic_at(u8, y + 1, x, MAGIC_MOTION) and _magic_at(u8, y + 2, x, MAGIC_GEOM)):
            continue
        ident = _read_codes(u8, y, x, IDENTITY_LATENT_DIM + 2)
        mot = _read_codes(u8, y + 1, x, 2 + EXPRESSION_LATENT_DIM)
        geom = _read_codes(u8, y + 2, x, 8)
        if ident is None or mot is None or geom is None:
            continue
        if ident[IDENTITY_LATENT_DIM] > 1 or ident[IDENTITY_LATENT_DIM + 1] >= len(HEAD_SHAPES):
            continue
        g16 = [int(geom[2 * k]) * 256 + int(geom[2 * k + 1]) for k in range(4)]
        m = mot / 255.0
        tags.append(
            Tag(
                identity=IdentityLatent(ident[:IDENTITY_LATENT_DIM] / 255.0),
                motion=MotionLatent(
                    m[0] * 2 * YAW_RANGE - YAW_RANGE, m[1] * 2 * PITCH_RANGE - PITCH_RANGE, m[2:]
                ),
                attrs=AppearanceAttrs(bool(ident[IDENTITY_LATENT_DIM]), HEAD_SHAPES[ident[IDENTITY_LATENT_DIM + 1]]),
                center=(g16[0] / 2.0, g16[1] / 2.0),
                axes=(g16[2] / 4.0, g16[3] / 4.0),
                origin=(int(x), int(y)),
            )
        )
    return tags


def primary_tag(pixels: np.ndarray) -> Optional[Tag]:
    """The largest head in the frame, first in raster order on ties."""
    tags = decode_tags(pixels)
    if not tags:
        return None
    return max(reversed(tags), key=lambda t: t.area)


def decode_latents(frame) -> Optional[tuple[IdentityLatent, MotionLatent]]:
    pixels = frame.pixels if isinstance(frame, FrameImage) else frame
    tag = primary_tag(pixels)
    if tag is None:
        return None
    return tag.identity, tag.motion


# ---------------------------------------------------------- trajectories


def _rng(*parts) -> np.random.Generator:
    digest = hashlib.sha256(":".join(str(p) for p in parts).encode()).digest()
    return np.random.default_rng(int.from_bytes(digest[:8], "little"))


def make_identity(seed: int) -> IdentityLatent:
    return IdentityLatent(_quantize(_rng("identity", seed).random(IDENTITY_LATENT_DIM)) / 255.0)


def make_attrs(seed: int) -> AppearanceAttrs:
    rng = _rng("attrs", seed)
    return AppearanceAttrs(
        glasses=bool(rng.random() < 0.4),
        head_shape=HEAD_SHAPES[int(rng.integers(len(HEAD_SHAPES)))],
        background=int(rng.integers(len(BACKGROUNDS))),
    )


def make_trajectory(
    behavior,
    T: int,
    seed: int,
    identity: Optional[IdentityLatent] = None,
    attrs: Optional[AppearanceAttrs] = None,
) -> AvatarTrajectory:
    """Motion sequence for one of the behaviour classes.

    Every trajectory has at least one frame with |yaw| < 3 and |pitch| < 3.
    """
    behavior = BehaviorTag(behavior)
    if T < 1:
        raise ValueError("T must be >= 1")
    rng = _rng("trajectory", behavior.value, T, seed)
    t = np.arange(T, dtype=np.float64)
    u = t / max(T - 1, 1)
    e = np.tile(rng.uniform(0.2, 0.8, EXPRESSION_LATENT_DIM), (T, 1))

    if behavior is BehaviorTag.GAZE_VARIATION:
        cycles = rng.uniform(0.8, 2.0)
        yaw = 38.0 * np.sin(2 * np.pi * cycles * u + rng.uniform(0, 2 * np.pi))
        pitch = 4.0 * np.sin(2 * np.pi * 0.5 * cycles * u + rng.uniform(0, 2 * np.pi))
    elif behavior is BehaviorTag.EXPRESSION_VARIATION:
        yaw = np.clip(rng.normal(0.0, 0.8, T), -2.0, 2.0)
        pitch = np.clip(rng.normal(0.0, 0.8, T), -2.0, 2.0)
        freq = rng.uniform(0.5, 2.5, EXPRESSION_LATENT_DIM)
        phase = rng.uniform(0, 2 * np.pi, EXPRESSION_LATENT_DIM)
        e = 0.5 + 0.45 * np.sin(2 * np.pi * np.outer(u, freq) + phase)
    elif behavior is BehaviorTag.SPEECH_HEAD_MOTION:
        yaw = 10.0 * np.sin(2 * np.pi * u * rng.uniform(0.5, 1.5) + rng.uniform(0, 2 * np.pi))
        pitch = 6.0 * np.sin(2 * np.pi * u * rng.uniform(0.5, 1.5) + rng.uniform(0, 2 * np.pi))
        for ch in (0, 1):  # mouth opening and width
            period = rng.uniform(4.0, 8.0)
            e[:, ch] = 0.5 + 0.45 * np.sin(2 * np.pi * t / period + rng.uniform(0, 2 * np.pi))
    elif behavior is BehaviorTag.RAPID_POSE_CHANGE:
        sign = np.where(np.arange(T) % 2 == 0, 1.0, -1.0) * rng.choice([-1.0, 1.0])
        yaw = sign * rng.uniform(22.0, YAW_RANGE, T)
        pitch = rng.uniform(-25.0, 25.0, T)
    else:
        yaw = np.cumsum(rng.normal(0, 3.0, T))
        pitch = np.cumsum(rng.normal(0, 2.0, T))

    k = int(rng.integers(T))
    yaw[k], pitch[k] = rng.uniform(-1.0, 1.0, 2)
    yaw = np.clip(yaw, -YAW_RANGE, YAW_RANGE)
    pitch = np.clip(pitch, -PITCH_RANGE, PITCH_RANGE)
    e = np.clip(e, 0.0, 1.0)
    motion = tuple(MotionLatent(yaw[i], pitch[i], e[i]) for i in range(T))
    return AvatarTrajectory(
        identity if identity is not None else make_identity(seed),
        motion,
        attrs if attrs is not None else make_attrs(seed),
        behavior,
    )


def trajectory_clip(traj: AvatarTrajectory, dims=(64, 64), fps: float = 25.0, clip_id: str = "synthetic") -> VideoClip:
    frames = tuple(
        render_frame(traj.identity, m, dims, traj.appearance_attrs, frame_index=i) for i, m in enumerate(traj.motion)
    )
    return VideoClip(frames, fps=fps, clip_id=clip_id)


def make_dataset(
    out_dir,
    identities: int = 2,
    behaviors=None,
    T: int = 50,
    seed: int = 0,
    dims=(64, 64),
    fps: float = 25.0,
):
    """Write identities x behaviours clips under ``out_dir/clips`` plus
    ``out_dir/manifest.tsv``; returns the manifest path."""
    if identities < 1:
        raise ValueError("identities must be >= 1")
    if T < 1:
        raise ValueError("T must be >= 1")
    behaviors = [BehaviorTag(b) for b in (behaviors or BEHAVIORS)]
    out_dir = Path(out_dir)
    entries = []
    for i in range(identities):
        subject = f"subject{i:02d}"
        identity, attrs = make_identity(f"{seed}-{i}"), make_attrs(f"{seed}-{i}")
        for b in behaviors:
            clip_id = f"{subject}_{b.value}"
            traj = make_trajectory(b, T, f"{seed}-{i}", identity, attrs)
            save_clip(trajectory_clip(traj, dims, fps, clip_id), out_dir / "clips" / clip_id)
            entries.append(ManifestEntry(clip_id, f"clips/{clip_id}", subject, b))
    path = out_dir / "manifest.tsv"
    write_manifest(DatasetManifest(tuple(entries), out_dir.name, out_dir), path)
    return path


# ------------------------------------------------------------ embeddings


def pad(v, dim: int) -> np.ndarray:
    out = np.zeros(dim)
    v = np.asarray(v, dtype=np.float64)
    out[: v.size] = v
    return out


def identity_embedding(z) -> np.ndarray:
    return pad(z, IDENTITY_DIM)


def expression_embedding(motion: MotionLatent) -> np.ndarray:
    # decoded yaw/pitch are never exactly 0 (127.5 is not an 8-bit code),
    # so this vector is never all-zero and cosine stays defined
    return pad(np.concatenate([[motion.yaw / YAW_RANGE, motion.pitch / PITCH_RANGE], motion.expression]), EXPRESSION_DIM)


# ------------------------------------------------------------ adapters


def _unit(v):
    return v / np.linalg.norm(v)


def draw_identity(seed: int, avoid: Optional[IdentityLatent] = None, max_draws: int = 10_000) -> IdentityLatent:
    """Seeded identity draw, re-drawn until it is at least
    ``MIN_LATENT_DISTANCE`` from ``avoid`` both as raw latents and as
    unit-normalized latents."""
    rng = _rng("inpaint", seed)
    for _ in range(max_draws):
        z = _quantize(rng.random(IDENTITY_LATENT_DIM)) / 255.0
        if not np.any(z):
            continue
        if avoid is None:
            return IdentityLatent(z)
        raw = np.linalg.norm(z - avoid.z)
        unit = np.linalg.norm(_unit(z) - _unit(avoid.z)) if np.any(avoid.z) else np.inf
        if raw >= MIN_LATENT_DISTANCE and unit >= MIN_LATENT_DISTANCE:
            return IdentityLatent(z)
    raise BackendFailure("could not draw a sufficiently distinct identity")


def caption_for(attrs: AppearanceAttrs) -> str:
    return f"a person {'with' if attrs.glasses else 'without'} glasses, {attrs.head_shape} head"


def attrs_from_prompt(prompt: str, fallback: AppearanceAttrs) -> AppearanceAttrs:
    text = prompt.lower()
    glasses = fallback.glasses
    if "without glasses" in text:
        glasses = False
    elif "with glasses" in text:
        glasses = True
    shape = next((s for s in HEAD_SHAPES if f"{s} head" in text), fallback.head_shape)
    return AppearanceAttrs(glasses, shape, fallback.background)


def _redraw(canvas_f: np.ndarray, tag: Tag, identity, motion, attrs) -> np.ndarray:
    canvas = _to_uint8(canvas_f).astype(np.uint8)
    _draw_avatar(canvas, identity, motion, attrs, tag.center, tag.axes)
    return canvas.astype(np.float64) / 255.0


class SyntheticPoseDetector:
    def estimate(self, pixels):
        tag = primary_tag(pixels)
        return None if tag is None else (tag.motion.yaw, tag.motion.pitch)


class SyntheticContourDetector:
    vertices = 48
    margin = 0.75

    def detect(self, pixels):
        h, w = pixels.shape[:2]
        polys = []
        theta = 2 * np.pi * np.arange(self.vertices) / self.vertices
        # circumscribed polygon, so it contains the ellipse rather than cutting it
        k = 1.0 / np.cos(np.pi / self.vertices)
        for tag in decode_tags(pixels):
            (cx, cy), (ax, ay) = tag.center, tag.axes
            x = np.clip(cx + k * (ax + self.margin) * np.cos(theta), 0, w - 1)
            y = np.clip(cy + k * (ay + self.margin) * np.sin(theta), 0, h - 1)
            polys.append(np.stack([x, y], axis=1))
        return polys


class SyntheticCaptioner:
    def caption(self, pixels):
        tag = primary_tag(pixels)
        return "a person" if tag is None else caption_for(tag.attrs)


class SyntheticInpainter:
    """Draws a seeded new identity and re-renders the head with the source
    motion and the attributes named in the prompt."""

    def inpaint(self, pixels, mask, prompt, seed):
        tag = primary_tag(pixels)
        if tag is None:
            raise BackendFailure("synthetic inpainter found no avatar to regenerate")
        mask = np.asarray(mask, dtype=bool)
        out = np.array(pixels, dtype=np.float64, copy=True)
        ring = _outer_ring(mask)
        if ring.any():
            out[mask] = np.median(out[ring], axis=0)
        identity = draw_identity(seed, avoid=tag.identity)
        return _redraw(out, tag, identity, tag.motion, attrs_from_prompt(prompt, tag.attrs))


def _outer_ring(mask: np.ndarray) -> np.ndarray:
    grown = mask.copy()
    grown[1:] |= mask[:-1]
    grown[:-1] |= mask[1:]
    grown[:, 1:] |= mask[:, :-1]
    grown[:, :-1] |= mask[:, 1:]
    return grown & ~mask


class SyntheticReenactor:
    """Renders the D-Twin's head with each driving frame's decoded motion."""

    working_resolution = None

    def reenact(self, image, driving):
        tag = primary_tag(image)
        if tag is None:
            raise BackendFailure("synthetic reenactor found no avatar in the source image")
        out, motion = [], NEUTRAL_MOTION
        for frame in driving:
            dtag = primary_tag(frame)
            if dtag is not None:
                motion = dtag.motion
            out.append(_redraw(image, tag, tag.identity, motion, tag.attrs))
        return out


class SyntheticFaceCropper:
    def crop(self, pixels):
        tag = primary_tag(pixels)
        if tag is None:
            return None
        h, w = pixels.shape[:2]
        (cx, cy), (ax, ay) = tag.center, tag.axes
        x0, x1 = max(0, int(np.floor(cx - ax - 1))), min(w, int(np.ceil(cx + ax + 2)))
        y0, y1 = max(0, int(np.floor(cy - ay - 1))), min(h, int(np.ceil(cy + ay + 2)))
        return np.array(pixels[y0:y1, x0:x1])


class SyntheticIdentityEmbedder:
    def embed(self, crop):
        tag = primary_tag(crop)
        if tag is None:
            raise BackendFailure("no avatar in crop")
        return identity_embedding(tag.identity.z)


class SyntheticExpressionEmbedder:
    def embed(self, crop):
        tag = primary_tag(crop)
        if tag is None:
            raise BackendFailure("no avatar in crop")
        return expression_embedding(tag.motion)


def register(registry) -> None:
    registry.register("pose_detector", "synthetic", SyntheticPoseDetector)
    registry.register("contour_detector", "synthetic", SyntheticContourDetector)
    registry.register("captioner", "synthetic", SyntheticCaptioner)
    registry.register("inpainter", "synthetic", SyntheticInpainter)
    registry.register("reenactor", "synthetic", SyntheticReenactor)
    registry.register("face_cropper", "synthetic", SyntheticFaceCropper)
    registry.register("identity_embedder", "synthetic", SyntheticIdentityEmbedder)
    registry.register("expression_embedder", "synthetic", SyntheticExpressionEmbedder)
