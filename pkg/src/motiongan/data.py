"""Video clips, training window sampling, and a synthetic face corpus.

The synthetic generator renders a parametric cartoon face (head ellipse,
eyes that blink, a mouth that opens and closes, a translating head) with
analytically known 68-point landmarks, so every clip ships with exact
annotations.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .landmarks import (
    N_POINTS,
    GeometricTransform,
    InvalidLandmarkError,
    LandmarkSet,
    PtsFormatError,
    apply_crop_window,
    crop_window,
    mirror,
    read_pts,
    write_pts,
)

CORPUS_FORMAT = "motiongan-corpus-v1"

IMAGE_EXTENSIONS = (".png", ".jpg", ".jpeg", ".bmp")


class IngestionError(ValueError):
    """A clip directory or its contents cannot be loaded."""


class SamplingError(ValueError):
    """A clip is too short for the requested training window."""


class ParameterError(ValueError):
    """Synthetic face parameters place geometry outside the canvas."""


@dataclass
class VideoClip:
    """One face video with per-frame landmark annotations.

    Attributes:
        frames: float32 array (N, H, W, 3) in [-1, 1].
        landmarks: float64 array (N, 68, 2) in frame coordinates.
        identity_id: stable identifier of the depicted identity.
        fps: optional frame rate; None when unknown.
        transforms: optional per-frame transforms from the original image
            coordinates into frame coordinates (set by load_clip).
    """

    frames: np.ndarray
    landmarks: np.ndarray
    identity_id: str
    fps: float | None = None
    transforms: list[GeometricTransform] | None = None

    def __post_init__(self):
        frames = np.asarray(self.frames, dtype=np.float32)
        lms = np.asarray(self.landmarks, dtype=np.float64)
        if frames.ndim != 4 or frames.shape[3] != 3:
            raise ValueError(f"expected (N, H, W, 3) frames, got {frames.shape}")
        if lms.shape != (frames.shape[0], N_POINTS, 2):
            raise ValueError(
                f"landmark array {lms.shape} does not match {frames.shape[0]} frames"
            )
        if frames.shape[0] < 1:
            raise ValueError("a clip needs at least one frame")
        self.frames = frames
        self.landmarks = lms

    def __len__(self) -> int:
        return self.frames.shape[0]

    def landmark_set(self, index: int) -> LandmarkSet:
        return LandmarkSet(points=self.landmarks[index])


@dataclass
class TrainingWindow:
    """A source frame plus a consecutive target window from one clip."""

    source_frame: np.ndarray
    source_landmarks: np.ndarray
    target_frames: np.ndarray
    target_landmarks: np.ndarray
    source_index: int
    first_target_index: int


def sample_window(clip: VideoClip, window_len: int, min_gap: int,
                  rng: np.random.Generator) -> TrainingWindow:
    """Draws a source frame and target window uniformly from a clip.

    The pair (source s, window start t0) is sampled uniformly over all
    combinations with |s - t0| >= min_gap; the source may precede or follow
    the window.
    """
    if window_len < 1:
        raise ValueError(f"window_len must be at least 1, got {window_len}")
    if min_gap < 0:
        raise ValueError(f"min_gap must be non-negative, got {min_gap}")
    n = len(clip)
    if n < window_len + min_gap:
        raise SamplingError(
            f"clip of {n} frames cannot host window_len={window_len} "
            f"with min_gap={min_gap}"
        )
    n_starts = n - window_len + 1
    sources = np.arange(n)[:, None]
    starts = np.arange(n_starts)[None, :]
    valid = np.argwhere(np.abs(sources - starts) >= min_gap)
    src, start = (int(v) for v in valid[rng.integers(len(valid))])
    return TrainingWindow(
        source_frame=clip.frames[src],
        source_landmarks=clip.landmarks[src],
        target_frames=clip.frames[start:start + window_len],
        target_landmarks=clip.landmarks[start:start + window_len],
        source_index=src,
        first_target_index=start,
    )


def mirror_clip(clip: VideoClip) -> VideoClip:
    """Returns the horizontally flipped copy of a clip."""
    flipped_frames = []
    flipped_lms = []
    for t in range(len(clip)):
        f, l = mirror(clip.frames[t], clip.landmark_set(t))
        flipped_frames.append(f)
        flipped_lms.append(l.points)
    return VideoClip(
        frames=np.stack(flipped_frames),
        landmarks=np.stack(flipped_lms),
        identity_id=clip.identity_id + "_mirror",
        fps=clip.fps,
    )


def augment_mirror(corpus: list[VideoClip]) -> list[VideoClip]:
    """Appends a mirrored copy of every clip to the corpus."""
    return list(corpus) + [mirror_clip(c) for c in corpus]


# ---------------------------------------------------------------------------
# Synthetic faces
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SyntheticFaceParams:
    """Geometry and appearance of one synthetic identity.

    Lengths are in pixels of the target canvas. The outer eye corners sit
    exactly eye_spacing apart, so the inter-ocular distance of every frame
    equals eye_spacing.
    """

    center: tuple[float, float]
    head_radii: tuple[float, float]
    eye_spacing: float
    eye_width: float
    eye_height: float
    brow_drop: float
    brow_arch: float
    mouth_y: float
    mouth_width: float
    lip_thickness: float
    mouth_amplitude: float
    mouth_frequency: float
    blink_period: int
    blink_phase: int
    translation_amplitude: tuple[float, float]
    translation_frequency: float
    color_seed: int

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, record: dict) -> "SyntheticFaceParams":
        record = dict(record)
        for key in ("center", "head_radii", "translation_amplitude"):
            record[key] = tuple(record[key])
        return cls(**record)


def random_face_params(rng: np.random.Generator, size: int) -> SyntheticFaceParams:
    """Draws face parameters that keep all geometry inside a size x size canvas."""
    s = float(size)
    rx = s * rng.uniform(0.28, 0.34)
    ry = s * rng.uniform(0.34, 0.40)
    cx = s * (0.5 + rng.uniform(-0.02, 0.02))
    cy = s * (0.48 + rng.uniform(-0.02, 0.02))
    eye_spacing = rx * rng.uniform(1.15, 1.45)
    eye_width = eye_spacing * rng.uniform(0.16, 0.20)
    return SyntheticFaceParams(
        center=(cx, cy),
        head_radii=(rx, ry),
        eye_spacing=eye_spacing,
        eye_width=eye_width,
        eye_height=eye_width * rng.uniform(0.5, 0.7),
        brow_drop=ry * rng.uniform(0.16, 0.22),
        brow_arch=ry * rng.uniform(0.04, 0.08),
        mouth_y=cy + ry * rng.uniform(0.40, 0.50),
        mouth_width=rx * rng.uniform(0.40, 0.55),
        lip_thickness=ry * rng.uniform(0.045, 0.07),
        mouth_amplitude=ry * rng.uniform(0.12, 0.22),
        mouth_frequency=rng.uniform(0.06, 0.16),
        blink_period=int(rng.integers(8, 21)),
        blink_phase=int(rng.integers(0, 8)),
        translation_amplitude=(s * rng.uniform(0.010, 0.030),
                               s * rng.uniform(0.005, 0.020)),
        translation_frequency=rng.uniform(0.02, 0.06),
        color_seed=int(rng.integers(2**31)),
    )


def _head_offset(params: SyntheticFaceParams, t: int) -> tuple[float, float]:
    ax, ay = params.translation_amplitude
    phase = 2.0 * math.pi * params.translation_frequency * t
    return ax * math.sin(phase), ay * math.sin(2.0 * phase)


def _mouth_opening(params: SyntheticFaceParams, t: int) -> float:
    phase = 2.0 * math.pi * params.mouth_frequency * t
    return params.mouth_amplitude * 0.5 * (1.0 - math.cos(phase))


def _is_blinking(params: SyntheticFaceParams, t: int) -> bool:
    return (t + params.blink_phase) % params.blink_period == 0


def synthetic_landmarks(params: SyntheticFaceParams, t: int) -> np.ndarray:
    """Analytic 68-point landmark positions at frame t, shape (68, 2)."""
    dx, dy = _head_offset(params, t)
    cx = params.center[0] + dx
    cy = params.center[1] + dy
    rx, ry = params.head_radii
    pts = np.zeros((N_POINTS, 2))

    # Jaw 0..16: lower arc of the inset head ellipse, left ear to right ear.
    theta = math.pi - np.arange(17) * (math.pi / 16.0)
    pts[0:17, 0] = cx + 0.96 * rx * np.cos(theta)
    pts[0:17, 1] = cy + 0.96 * ry * np.sin(theta)

    eye_y = cy - 0.20 * ry
    w = params.eye_width
    h = 0.15 * params.eye_height if _is_blinking(params, t) else params.eye_height
    half_span = 0.5 * params.eye_spacing
    ex = cx - half_span + w  # center of the viewer-left eye
    fx = cx + half_span - w  # center of the viewer-right eye

    # Eyes 36..41 (viewer left, 36 outer) and 42..47 (viewer right, 45 outer).
    pts[36] = (ex - w, eye_y)
    pts[37] = (ex - 0.5 * w, eye_y - h)
    pts[38] = (ex + 0.5 * w, eye_y - h)
    pts[39] = (ex + w, eye_y)
    pts[40] = (ex + 0.5 * w, eye_y + h)
    pts[41] = (ex - 0.5 * w, eye_y + h)
    pts[42] = (fx - w, eye_y)
    pts[43] = (fx - 0.5 * w, eye_y - h)
    pts[44] = (fx + 0.5 * w, eye_y - h)
    pts[45] = (fx + w, eye_y)
    pts[46] = (fx + 0.5 * w, eye_y + h)
    pts[47] = (fx - 0.5 * w, eye_y + h)

    # Brows 17..21 and 22..26 arch above the eyes.
    brow_y = eye_y - params.brow_drop
    u = np.linspace(0.0, 1.0, 5)
    arch = params.brow_arch * np.sin(math.pi * u)
    bw = 1.2 * w
    pts[17:22, 0] = (ex - bw) + u * 2 * bw
    pts[17:22, 1] = brow_y - arch
    pts[22:27, 0] = (fx - bw) + u * 2 * bw
    pts[22:27, 1] = brow_y - arch

    # Nose 27..30 bridge, 31..35 nostril row.
    tip_y = cy + 0.12 * ry
    pts[27:31, 0] = cx
    pts[27:31, 1] = np.linspace(eye_y + 0.10 * ry, tip_y, 4)
    pts[31:36, 0] = cx + np.linspace(-0.10, 0.10, 5) * rx
    pts[31:36, 1] = tip_y + 0.06 * ry

    # Mouth: outer contour 48..59, inner contour 60..67.
    opening = _mouth_opening(params, t)
    my = params.mouth_y + dy
    a = params.mouth_width
    b_outer = params.lip_thickness + 0.5 * opening
    angles = math.pi - np.arange(12) * (math.pi / 6.0)
    pts[48:60, 0] = cx + a * np.cos(angles)
    pts[48:60, 1] = my - b_outer * np.sin(angles)
    inner_angles = math.pi - np.arange(8) * (math.pi / 4.0)
    pts[60:68, 0] = cx + 0.75 * a * np.cos(inner_angles)
    pts[60:68, 1] = my - 0.5 * opening * np.sin(inner_angles)

    return pts


def _face_colors(color_seed: int) -> dict:
    rng = np.random.default_rng(color_seed)
    skin = rng.uniform(0.45, 0.85, 3)
    background = rng.uniform(0.05, 0.95, 3)
    # Redraw until the background clearly separates from the head.
    while np.linalg.norm(background - skin) < 0.35:
        background = rng.uniform(0.05, 0.95, 3)
    return {
        "skin": skin,
        "background": background,
        "eye": rng.uniform(0.80, 0.98, 3),
        "lip": np.array([rng.uniform(0.35, 0.70), rng.uniform(0.05, 0.25),
                         rng.uniform(0.05, 0.30)]),
        "interior": rng.uniform(0.02, 0.12, 3),
        "brow": rng.uniform(0.05, 0.30, 3),
        "jaw": skin * 0.55,
    }


def _fill_ellipse(canvas, xo, yo, cx, cy, rx, ry, color):
    if rx <= 0 or ry <= 0:
        return
    mask = ((xo - cx) / rx) ** 2 + ((yo - cy) / ry) ** 2 <= 1.0
    canvas[mask] = color


def render_synthetic_frame(params: SyntheticFaceParams, t: int, size: int,
                           noise: np.ndarray) -> np.ndarray:
    """Renders frame t at 2x supersampling, returns float32 (size, size, 3)
    in [-1, 1]."""
    colors = _face_colors(params.color_seed)
    dx, dy = _head_offset(params, t)
    cx = params.center[0] + dx
    cy = params.center[1] + dy
    rx, ry = params.head_radii
    pts = synthetic_landmarks(params, t)

    ss = 2 * size
    canvas = np.empty((ss, ss, 3))
    canvas[:] = colors["background"]
    canvas += np.repeat(np.repeat(noise, 2, axis=0), 2, axis=1)
    grid = (np.arange(ss) - 0.5) / 2.0  # supersample centers in pixel coords
    xo, yo = np.meshgrid(grid, grid)

    _fill_ellipse(canvas, xo, yo, cx, cy, rx, ry, colors["skin"])

    # Jaw line: a ring over the lower half of the inset head ellipse.
    norm = (((xo - cx) / (0.96 * rx)) ** 2 + ((yo - cy) / (0.96 * ry)) ** 2)
    canvas[(norm >= 0.90) & (norm <= 1.0) & (yo >= cy)] = colors["jaw"]

    # Brows: thin dark ellipses over the landmark arcs.
    for lo, hi in ((17, 22), (22, 27)):
        bx = pts[lo:hi, 0].mean()
        by = pts[lo:hi, 1].mean()
        _fill_ellipse(canvas, xo, yo, bx, by, 1.3 * params.eye_width,
                      max(0.9, params.brow_arch), colors["brow"])

    # Nose bridge: a vertical line from between the eyes to the tip.
    bridge = (np.abs(xo - cx) <= 0.7) & (yo >= pts[27, 1]) & (yo <= pts[30, 1])
    canvas[bridge] = colors["jaw"]

    h = 0.15 * params.eye_height if _is_blinking(params, t) else params.eye_height
    half_span = 0.5 * params.eye_spacing
    eye_y = cy - 0.20 * ry
    for ecx in (cx - half_span + params.eye_width,
                cx + half_span - params.eye_width):
        _fill_ellipse(canvas, xo, yo, ecx, eye_y, params.eye_width,
                      max(h, 0.5), colors["eye"])

    opening = _mouth_opening(params, t)
    my = params.mouth_y + dy
    _fill_ellipse(canvas, xo, yo, cx, my, params.mouth_width,
                  params.lip_thickness + 0.5 * opening, colors["lip"])
    if opening > 0.3:
        _fill_ellipse(canvas, xo, yo, cx, my, 0.75 * params.mouth_width,
                      0.5 * opening, colors["interior"])

    down = canvas.reshape(size, 2, size, 2, 3).mean(axis=(1, 3))
    return np.clip(down * 2.0 - 1.0, -1.0, 1.0).astype(np.float32)


def make_synthetic_clip(params: SyntheticFaceParams, n_frames: int, size: int,
                        seed: int) -> VideoClip:
    """Renders a deterministic synthetic clip.

    The seed controls a static background texture; identical arguments
    produce bitwise-identical frames and landmarks.
    """
    if n_frames < 1:
        raise ValueError(f"n_frames must be at least 1, got {n_frames}")
    if size < 16:
        raise ValueError(f"size must be at least 16, got {size}")
    all_lms = np.stack([synthetic_landmarks(params, t) for t in range(n_frames)])
    if all_lms.min() < 1.0 or all_lms.max() > size - 2.0:
        raise ParameterError(
            "landmarks leave the canvas; shrink the head or its motion"
        )
    ax, ay = params.translation_amplitude
    rx, ry = params.head_radii
    cx, cy = params.center
    if (cx - rx - ax < 0.5 or cx + rx + ax > size - 1.5
            or cy - ry - ay < 0.5 or cy + ry + ay > size - 1.5):
        raise ParameterError("head ellipse leaves the canvas")
    noise = np.random.default_rng(seed).uniform(-0.06, 0.06, (size, size, 3))
    frames = np.stack([
        render_synthetic_frame(params, t, size, noise) for t in range(n_frames)
    ])
    return VideoClip(
        frames=frames,
        landmarks=all_lms,
        identity_id=f"synth-{params.color_seed:08d}",
        fps=25.0,
    )


# ---------------------------------------------------------------------------
# Clip and corpus persistence
# ---------------------------------------------------------------------------


def frame_to_uint8(frame: np.ndarray) -> np.ndarray:
    """Maps a [-1, 1] float frame to uint8."""
    arr = (np.asarray(frame, dtype=np.float64) + 1.0) * 0.5 * 255.0
    return np.clip(np.round(arr), 0, 255).astype(np.uint8)


def save_clip(clip: VideoClip, out_dir) -> Path:
    """Writes numbered PNG frames with sibling pts files."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for t in range(len(clip)):
        Image.fromarray(frame_to_uint8(clip.frames[t])).save(out / f"{t:06d}.png")
        write_pts(out / f"{t:06d}.pts", clip.landmark_set(t))
    return out


def _sorted_files(directory: Path, extensions) -> list[Path]:
    return sorted(p for p in directory.iterdir()
                  if p.is_file() and p.suffix.lower() in extensions)


def load_clip(frame_dir, landmark_dir, out_size: int = 128,
              margin_frac: float = 0.2) -> VideoClip:
    """Loads a clip from numbered frames and landmark files.

    All frames are cropped with a single square window around the union of
    every frame's landmarks, so the clip stays spatially aligned and head
    motion survives the crop. Frames and landmark files pair up by sorted
    order and must share stems.
    """
    frame_dir = Path(frame_dir)
    landmark_dir = Path(landmark_dir)
    if not frame_dir.is_dir():
        raise IngestionError(f"not a directory: {frame_dir}")
    if not landmark_dir.is_dir():
        raise IngestionError(f"not a directory: {landmark_dir}")
    frame_paths = _sorted_files(frame_dir, IMAGE_EXTENSIONS)
    lms_paths = _sorted_files(landmark_dir, (".pts",))
    if not frame_paths:
        raise IngestionError(f"no image files in {frame_dir}")
    if len(frame_paths) != len(lms_paths):
        raise IngestionError(
            f"{len(frame_paths)} frames but {len(lms_paths)} landmark files "
            f"in {frame_dir}"
        )
    for fp, lp in zip(frame_paths, lms_paths):
        if fp.stem != lp.stem:
            raise IngestionError(f"frame {fp.name} pairs with {lp.name}")

    landmark_sets = []
    for lp in lms_paths:
        try:
            landmark_sets.append(read_pts(lp))
        except (PtsFormatError, OSError) as exc:
            raise IngestionError(f"cannot read {lp}: {exc}") from exc

    union_points = np.concatenate([l.points for l in landmark_sets])
    try:
        window = crop_window(union_points, margin_frac)
    except InvalidLandmarkError as exc:
        raise IngestionError(f"{frame_dir}: {exc}") from exc

    frames = []
    cropped_lms = []
    transforms = []
    for fp, lms in zip(frame_paths, landmark_sets):
        try:
            image = np.asarray(Image.open(fp).convert("RGB"))
        except OSError as exc:
            raise IngestionError(f"cannot read {fp}: {exc}") from exc
        frame, transform = apply_crop_window(image, window, out_size)
        frames.append(frame)
        cropped_lms.append(transform.apply(lms.points))
        transforms.append(transform)

    return VideoClip(
        frames=np.stack(frames),
        landmarks=np.stack(cropped_lms),
        identity_id=frame_dir.name,
        transforms=transforms,
    )


def write_synthetic_corpus(out_dir, n_identities: int, n_frames: int,
                           size: int, seed: int) -> Path:
    """Renders a corpus of synthetic identities to disk.

    Layout: out_dir/manifest.json plus one clip_NNN directory per identity
    holding numbered PNG and pts files. The manifest records every
    parameter needed to regenerate the corpus bit for bit.
    """
    if n_identities < 1:
        raise ValueError(f"n_identities must be at least 1, got {n_identities}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    master = np.random.default_rng(seed)
    entries = []
    for i in range(n_identities):
        params = random_face_params(master, size)
        noise_seed = int(master.integers(2**31))
        clip = make_synthetic_clip(params, n_frames, size, noise_seed)
        name = f"clip_{i:03d}"
        save_clip(clip, out / name)
        entries.append({
            "name": name,
            "noise_seed": noise_seed,
            "params": params.to_dict(),
        })
    manifest = {
        "format": CORPUS_FORMAT,
        "size": size,
        "n_frames": n_frames,
        "seed": seed,
        "clips": entries,
    }
    manifest_path = out / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=2))
    return manifest_path


def corpus_from_manifest(manifest_path) -> list[VideoClip]:
    """Regenerates the synthetic clips recorded in a corpus manifest."""
    manifest_path = Path(manifest_path)
    manifest = json.loads(manifest_path.read_text())
    if manifest.get("format") != CORPUS_FORMAT:
        raise IngestionError(
            f"{manifest_path}: unknown corpus format {manifest.get('format')!r}"
        )
    clips = []
    for entry in manifest["clips"]:
        params = SyntheticFaceParams.from_dict(entry["params"])
        clips.append(make_synthetic_clip(
            params, manifest["n_frames"], manifest["size"], entry["noise_seed"]
        ))
    return clips


def load_corpus(root, out_size: int = 128, margin_frac: float = 0.2
                ) -> list[VideoClip]:
    """Loads every clip directory under a corpus root."""
    root = Path(root)
    if not root.is_dir():
        raise IngestionError(f"not a directory: {root}")
    clip_dirs = sorted(
        d for d in root.iterdir()
        if d.is_dir() and any(p.suffix == ".pts" for p in d.iterdir())
    )
    if not clip_dirs:
        raise IngestionError(f"no clip directories under {root}")
    return [load_clip(d, d, out_size=out_size, margin_frac=margin_frac)
            for d in clip_dirs]
