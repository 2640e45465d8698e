"""Parametric beating-ventricle video generator and dataset persistence.

A video is a stack of grayscale frames containing one pulsating dark
ellipse (the LV cavity) surrounded by a bright rim, over a textured
background with static distractor blobs and per-frame multiplicative
speckle. The EF label is the single-plane area proxy
``100 * (A_ed - A_es) / A_ed`` computed from the rasterized binary masks,
so the label is exactly consistent with the emitted masks.

On-disk formats:
  * EVID -- magic ``EVID``, little-endian u32 F, H, W, then F*H*W u8
    intensities (frame-major, row-major).
  * EMSK -- same layout, values restricted to {0, 1}.
  * manifest -- JSON array of records, see :class:`DatasetRecord`.
"""

from __future__ import annotations

import dataclasses
import json
import math
import os
import struct
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import FormatError, InvalidInputError

EVID_MAGIC = b"EVID"
EMSK_MAGIC = b"EMSK"

EF_MIN = 10.0
EF_MAX = 80.0

# Geometry profiles: image side and default raw video length.
PROFILES = {
    "default": {"image_size": 112, "num_frames": 96},
    "test": {"image_size": 64, "num_frames": 96},
}


@dataclass
class SyntheticVideo:
    """One generated video with its per-frame masks and analytic label."""

    frames: np.ndarray  # (F, H, W) uint8
    masks: np.ndarray  # (F, H, W) uint8 in {0, 1}
    ed_index: int
    es_index: int
    ef: float
    period: float

    @property
    def num_frames(self) -> int:
        return int(self.frames.shape[0])

    @property
    def image_size(self) -> tuple[int, int]:
        return int(self.frames.shape[1]), int(self.frames.shape[2])


@dataclass(frozen=True)
class ClipSpec:
    """How to cut a fixed-length strided clip out of a raw video."""

    num_frames: int = 32
    stride: int = 2
    start_offset: int | None = None

    @property
    def span(self) -> int:
        """Raw frames covered: last index is start + span - 1."""
        return (self.num_frames - 1) * self.stride + 1


@dataclass(frozen=True)
class VideoParams:
    """Ventricle shape/motion/appearance parameters for one video."""

    image_size: int = 112
    num_frames: int = 96
    ef_target: float = 55.0
    period: float = 28.0
    phase0: float = 0.0  # phase offset in frames; ED occurs where phase hits 0
    center: tuple[float, float] = (56.0, 56.0)  # (row, col)
    semi_axes: tuple[float, float] = (26.0, 18.0)  # (a, b) at end-diastole
    angle: float = 0.0  # radians
    base_intensity: float = 150.0
    cavity_factor: float = 0.25  # blood pool is dark
    rim_factor: float = 1.35  # myocardial rim is bright
    rim_scale: float = 1.28  # rim outer ellipse = semi_axes * rim_scale
    speckle: float = 0.12
    n_distractors: int = 2


def ef_from_areas(a_ed: float, a_es: float) -> float:
    """EF percent from end-diastolic and end-systolic areas."""
    if a_ed <= 0:
        raise InvalidInputError(f"end-diastolic area must be positive, got {a_ed}")
    if a_es < 0 or a_es > a_ed:
        raise InvalidInputError(
            f"end-systolic area must lie in [0, a_ed={a_ed}], got {a_es}"
        )
    return 100.0 * (a_ed - a_es) / a_ed


def _ellipse_mask(
    size: int, center: tuple[float, float], a: float, b: float, angle: float
) -> np.ndarray:
    """Binary raster of a rotated ellipse; pixel (r, c) is inside iff its
    integer coordinate satisfies the ellipse inequality."""
    rr, cc = np.mgrid[0:size, 0:size]
    dr = rr - center[0]
    dc = cc - center[1]
    u = dc * math.cos(angle) + dr * math.sin(angle)
    v = -dc * math.sin(angle) + dr * math.cos(angle)
    return ((u / a) ** 2 + (v / b) ** 2 <= 1.0).astype(np.uint8)


def _smooth_field(size: int, rng: np.random.Generator, coarse: int = 8) -> np.ndarray:
    """Low-frequency texture field with roughly unit scale, mean ~0."""
    grid = rng.standard_normal((coarse, coarse))
    return ndimage.zoom(grid, size / coarse, order=1)[:size, :size]


def _contraction(params: VideoParams, t: np.ndarray) -> np.ndarray:
    """Raised-cosine cardiac phase in [0, 1]: 0 at ED, 1 at ES."""
    return 0.5 * (1.0 - np.cos(2.0 * math.pi * (t + params.phase0) / params.period))


def _validate_params(params: VideoParams) -> None:
    if params.num_frames < 2:
        raise InvalidInputError("num_frames must be >= 2")
    if params.period <= 2:
        raise InvalidInputError("period must exceed 2 frames")
    if not (EF_MIN <= params.ef_target <= EF_MAX):
        raise InvalidInputError(
            f"ef_target {params.ef_target} outside label range "
            f"[{EF_MIN}, {EF_MAX}]"
        )
    a, b = params.semi_axes
    if a <= 0 or b <= 0:
        raise InvalidInputError("semi-axes must be positive")
    # Frame containment at maximal extent (ED), with a 1 px margin.
    ex = math.sqrt((a * math.cos(params.angle)) ** 2 + (b * math.sin(params.angle)) ** 2)
    ey = math.sqrt((a * math.sin(params.angle)) ** 2 + (b * math.cos(params.angle)) ** 2)
    outer = params.rim_scale
    cy, cx = params.center
    s = params.image_size
    if (
        cx - outer * ex < 1.0
        or cx + outer * ex > s - 2.0
        or cy - outer * ey < 1.0
        or cy + outer * ey > s - 2.0
    ):
        raise InvalidInputError("ellipse leaves the frame at end-diastole")


def generate_video(params: VideoParams, seed: int) -> SyntheticVideo:
    """Render one beating-ventricle video. Deterministic in (params, seed)."""
    _validate_params(params)
    rng = np.random.default_rng(seed)
    s = params.image_size
    f = params.num_frames

    # Axis contraction factor k reproduces the target EF under the area
    # proxy: EF = 1 - (1 - k)^2 when both semi-axes shrink by k at ES.
    k = 1.0 - math.sqrt(1.0 - params.ef_target / 100.0)
    c = _contraction(params, np.arange(f, dtype=np.float64))
    shrink = 1.0 - k * c

    masks = np.empty((f, s, s), dtype=np.uint8)
    rims = np.empty((f, s, s), dtype=bool)
    a0, b0 = params.semi_axes
    for t in range(f):
        a_t, b_t = a0 * shrink[t], b0 * shrink[t]
        inner = _ellipse_mask(s, params.center, a_t, b_t, params.angle)
        outer = _ellipse_mask(
            s, params.center, a_t * params.rim_scale, b_t * params.rim_scale, params.angle
        )
        masks[t] = inner
        rims[t] = (outer == 1) & (inner == 0)

    areas = masks.reshape(f, -1).sum(axis=1)
    ed_index = int(np.argmax(areas))
    es_index = int(np.argmin(areas))
    if areas[ed_index] == 0:
        raise InvalidInputError("ventricle rasterized to an empty mask")
    ef = ef_from_areas(float(areas[ed_index]), float(areas[es_index]))
    if not (EF_MIN <= ef <= EF_MAX):
        raise InvalidInputError(
            f"rasterized EF {ef:.2f} falls outside the label range "
            f"[{EF_MIN}, {EF_MAX}]"
        )

    # Static background: smooth texture plus 1-3 distractor blobs that do
    # not pulsate, so intensity statistics alone do not reveal the label.
    background = params.base_intensity * (1.0 + 0.15 * _smooth_field(s, rng))
    for _ in range(params.n_distractors):
        dc = (rng.uniform(0.1 * s, 0.9 * s), rng.uniform(0.1 * s, 0.9 * s))
        da = rng.uniform(0.05 * s, 0.12 * s)
        db = rng.uniform(0.05 * s, 0.12 * s)
        dangle = rng.uniform(0, math.pi)
        blob = _ellipse_mask(s, dc, da, db, dangle).astype(bool)
        factor = rng.choice([0.55, 1.35])
        background = np.where(blob, background * factor, background)

    frames = np.empty((f, s, s), dtype=np.uint8)
    for t in range(f):
        img = background.copy()
        img[rims[t]] *= params.rim_factor
        img[masks[t] == 1] *= params.cavity_factor
        img *= 1.0 + params.speckle * rng.standard_normal((s, s))
        frames[t] = np.clip(img, 0, 255).astype(np.uint8)

    return SyntheticVideo(
        frames=frames,
        masks=masks,
        ed_index=ed_index,
        es_index=es_index,
        ef=ef,
        period=params.period,
    )


def random_params(rng: np.random.Generator, profile: str = "default") -> VideoParams:
    """Draw one plausible parameter set for the given geometry profile."""
    geo = PROFILES[profile]
    s = geo["image_size"]
    a0 = rng.uniform(0.20, 0.28) * s
    b0 = a0 * rng.uniform(0.62, 0.85)
    return VideoParams(
        image_size=s,
        num_frames=geo["num_frames"],
        ef_target=float(rng.uniform(EF_MIN, EF_MAX)),
        period=float(rng.uniform(16.0, 40.0)),
        phase0=float(rng.uniform(0.0, 40.0)),
        center=(
            s / 2 + float(rng.uniform(-0.06, 0.06)) * s,
            s / 2 + float(rng.uniform(-0.06, 0.06)) * s,
        ),
        semi_axes=(float(a0), float(b0)),
        angle=float(rng.uniform(-0.5, 0.5)),
        base_intensity=float(rng.uniform(120.0, 190.0)),
        cavity_factor=float(rng.uniform(0.15, 0.35)),
        rim_factor=float(rng.uniform(1.2, 1.5)),
        speckle=float(rng.uniform(0.08, 0.16)),
        n_distractors=int(rng.integers(1, 4)),
    )


def random_video(
    rng: np.random.Generator, profile: str = "default", max_tries: int = 50
) -> SyntheticVideo:
    """Draw params until a valid video comes out (rejection keeps the EF
    sampling approximately uniform on the label range)."""
    for _ in range(max_tries):
        params = random_params(rng, profile)
        seed = int(rng.integers(0, 2**31 - 1))
        try:
            return generate_video(params, seed)
        except InvalidInputError:
            continue
    raise InvalidInputError(f"no valid video after {max_tries} parameter draws")


def degrade(video: SyntheticVideo, noise_rate: float, seed: int) -> SyntheticVideo:
    """Zero out exactly round(noise_rate * H * W) pixels per frame,
    chosen uniformly without replacement, independently per frame.
    Masks and labels are untouched."""
    if not (0.0 <= noise_rate <= 1.0):
        raise InvalidInputError(f"noise_rate must lie in [0, 1], got {noise_rate}")
    f, h, w = video.frames.shape
    count = int(round(noise_rate * h * w))
    frames = video.frames.copy()
    rng = np.random.default_rng(seed)
    for t in range(f):
        if count:
            idx = rng.choice(h * w, size=count, replace=False)
            frames[t].reshape(-1)[idx] = 0
    return dataclasses.replace(video, frames=frames, masks=video.masks.copy())


def clip_indices(
    num_frames: int, spec: ClipSpec, seed: int | None = None
) -> np.ndarray:
    """Raw frame indices of one clip; random start when spec.start_offset
    is None and a seed is given."""
    max_start = num_frames - spec.span
    if max_start < 0:
        raise InvalidInputError(
            f"video of {num_frames} frames too short for clip spanning {spec.span}"
        )
    if spec.start_offset is not None:
        start = spec.start_offset
        if start < 0 or start > max_start:
            raise InvalidInputError(
                f"start_offset {start} invalid for video of {num_frames} frames"
            )
    elif seed is not None:
        start = int(np.random.default_rng(seed).integers(0, max_start + 1))
    else:
        start = 0
    return start + spec.stride * np.arange(spec.num_frames)


def sample_clip(
    video: SyntheticVideo | np.ndarray, spec: ClipSpec, seed: int | None = None
) -> np.ndarray:
    """Cut a (T, H, W) clip out of a video (or raw frame stack)."""
    frames = video.frames if isinstance(video, SyntheticVideo) else video
    return frames[clip_indices(frames.shape[0], spec, seed)]


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------


def _write_stack(path: str, stack: np.ndarray, magic: bytes) -> None:
    if stack.dtype != np.uint8 or stack.ndim != 3:
        raise InvalidInputError("frame stacks must be uint8 with shape (F, H, W)")
    f, h, w = stack.shape
    with open(path, "wb") as fh:
        fh.write(magic)
        fh.write(struct.pack("<III", f, h, w))
        fh.write(np.ascontiguousarray(stack).tobytes())


def _read_stack(path: str, magic: bytes) -> np.ndarray:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != magic:
        raise FormatError(
            f"bad magic {blob[:4]!r}, expected {magic!r} in {path}", offset=0
        )
    if len(blob) < 16:
        raise FormatError(f"truncated header in {path}", offset=len(blob))
    f, h, w = struct.unpack("<III", blob[4:16])
    expected = 16 + f * h * w
    if f == 0 or h == 0 or w == 0:
        raise FormatError(f"zero dimension ({f}x{h}x{w}) in {path}", offset=4)
    if len(blob) != expected:
        raise FormatError(
            f"payload length {len(blob) - 16} does not match {f}x{h}x{w} in {path}",
            offset=min(len(blob), expected),
        )
    stack = np.frombuffer(blob, dtype=np.uint8, offset=16).reshape(f, h, w)
    if magic == EMSK_MAGIC and stack.max(initial=0) > 1:
        raise FormatError(f"mask values outside {{0,1}} in {path}", offset=16)
    return stack.copy()


def write_video_file(path: str, frames: np.ndarray) -> None:
    _write_stack(path, frames, EVID_MAGIC)


def read_video_file(path: str) -> np.ndarray:
    return _read_stack(path, EVID_MAGIC)


def write_mask_file(path: str, masks: np.ndarray) -> None:
    if masks.max(initial=0) > 1:
        raise InvalidInputError("mask values must be in {0, 1}")
    _write_stack(path, masks, EMSK_MAGIC)


def read_mask_file(path: str) -> np.ndarray:
    return _read_stack(path, EMSK_MAGIC)


@dataclass
class DatasetRecord:
    """One manifest entry. `period` is a generator extra; `alpha` and
    `teacher_mask_path` are appended by the pseudo-label step."""

    video_path: str
    mask_path: str
    ef: float
    ed_index: int
    es_index: int
    split: str
    period: float = 0.0
    alpha: float | None = None
    teacher_mask_path: str | None = None

    def to_json(self) -> dict:
        rec = {
            "video_path": self.video_path,
            "mask_path": self.mask_path,
            "ef": self.ef,
            "ed_index": self.ed_index,
            "es_index": self.es_index,
            "split": self.split,
            "period": self.period,
        }
        if self.alpha is not None:
            rec["alpha"] = self.alpha
        if self.teacher_mask_path is not None:
            rec["teacher_mask_path"] = self.teacher_mask_path
        return rec

    @classmethod
    def from_json(cls, rec: dict) -> "DatasetRecord":
        return cls(
            video_path=rec["video_path"],
            mask_path=rec["mask_path"],
            ef=float(rec["ef"]),
            ed_index=int(rec["ed_index"]),
            es_index=int(rec["es_index"]),
            split=rec["split"],
            period=float(rec.get("period", 0.0)),
            alpha=rec.get("alpha"),
            teacher_mask_path=rec.get("teacher_mask_path"),
        )


class EchoDataset:
    """Manifest-backed dataset with lazy, cached video loading."""

    def __init__(self, root: str, records: list[DatasetRecord], manifest_path: str):
        self.root = root
        self.records = records
        self.manifest_path = manifest_path
        self._video_cache: dict[int, SyntheticVideo] = {}
        self._teacher_cache: dict[int, np.ndarray] = {}

    def __len__(self) -> int:
        return len(self.records)

    def indices(self, split: str | None = None) -> list[int]:
        if split is None:
            return list(range(len(self.records)))
        return [i for i, r in enumerate(self.records) if r.split == split]

    def load_video(self, i: int, cache: bool = True) -> SyntheticVideo:
        if i in self._video_cache:
            return self._video_cache[i]
        rec = self.records[i]
        video = SyntheticVideo(
            frames=read_video_file(os.path.join(self.root, rec.video_path)),
            masks=read_mask_file(os.path.join(self.root, rec.mask_path)),
            ed_index=rec.ed_index,
            es_index=rec.es_index,
            ef=rec.ef,
            period=rec.period,
        )
        if cache:
            self._video_cache[i] = video
        return video

    def load_teacher_masks(self, i: int, cache: bool = True) -> np.ndarray:
        if i in self._teacher_cache:
            return self._teacher_cache[i]
        rec = self.records[i]
        if rec.teacher_mask_path is None:
            raise InvalidInputError(
                f"record {i} has no teacher masks; run the pseudolabel step first"
            )
        masks = read_mask_file(os.path.join(self.root, rec.teacher_mask_path))
        if cache:
            self._teacher_cache[i] = masks
        return masks

    def save_manifest(self, path: str | None = None) -> None:
        path = path or self.manifest_path
        with open(path, "w") as fh:
            json.dump([r.to_json() for r in self.records], fh, indent=1)


def write_dataset(
    videos: list[SyntheticVideo],
    manifest_path: str,
    out_dir: str,
    splits: list[str] | None = None,
) -> EchoDataset:
    """Persist videos + masks as EVID/EMSK pairs plus a JSON manifest."""
    if splits is None:
        splits = ["train"] * len(videos)
    if len(splits) != len(videos):
        raise InvalidInputError("splits must be parallel to videos")
    os.makedirs(out_dir, exist_ok=True)
    records = []
    for i, (video, split) in enumerate(zip(videos, splits)):
        video_name = f"video_{i:04d}.evid"
        mask_name = f"video_{i:04d}.emsk"
        write_video_file(os.path.join(out_dir, video_name), video.frames)
        write_mask_file(os.path.join(out_dir, mask_name), video.masks)
        records.append(
            DatasetRecord(
                video_path=video_name,
                mask_path=mask_name,
                ef=video.ef,
                ed_index=video.ed_index,
                es_index=video.es_index,
                split=split,
                period=video.period,
            )
        )
    dataset = EchoDataset(out_dir, records, manifest_path)
    os.makedirs(os.path.dirname(os.path.abspath(manifest_path)), exist_ok=True)
    dataset.save_manifest(manifest_path)
    return dataset


def read_dataset(manifest_path: str, root: str | None = None) -> EchoDataset:
    with open(manifest_path) as fh:
        raw = json.load(fh)
    records = [DatasetRecord.from_json(rec) for rec in raw]
    if root is None:
        root = os.path.dirname(os.path.abspath(manifest_path))
    return EchoDataset(root, records, manifest_path)


def generate_dataset(
    counts: dict[str, int], seed: int, profile: str = "default"
) -> tuple[list[SyntheticVideo], list[str]]:
    """Generate videos for the given split sizes, e.g. {"train": 200, ...}."""
    rng = np.random.default_rng(seed)
    videos, splits = [], []
    for split in ("train", "val", "test"):
        for _ in range(int(counts.get(split, 0))):
            videos.append(random_video(rng, profile))
            splits.append(split)
    return videos, splits
