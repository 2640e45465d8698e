import numpy as np
import pytest
from scipy import stats

from echoef.errors import FormatError, InvalidInputError
from echoef.synth import (
    ClipSpec,
    VideoParams,
    clip_indices,
    degrade,
    ef_from_areas,
    generate_video,
    random_video,
    read_dataset,
    read_video_file,
    sample_clip,
    write_dataset,
    write_video_file,
)


def small_params(**overrides) -> VideoParams:
    base = dict(
        image_size=64, num_frames=96, ef_target=55.0, period=24.0,
        center=(32.0, 32.0), semi_axes=(14.0, 10.0),
    )
    base.update(overrides)
    return VideoParams(**base)


class TestEfFromAreas:
    def test_direct_arithmetic(self):
        assert ef_from_areas(100, 40) == 60.0

    def test_no_stroke(self):
        assert ef_from_areas(100, 100) == 0.0

    def test_scale_invariance(self):
        assert ef_from_areas(250, 100) == 60.0

    def test_zero_ed_area_rejected(self):
        with pytest.raises(InvalidInputError):
            ef_from_areas(0, 0)

    def test_es_larger_than_ed_rejected(self):
        with pytest.raises(InvalidInputError):
            ef_from_areas(100, 101)


class TestGenerateVideo:
    def test_zero_amplitude_rejected(self):
        with pytest.raises(InvalidInputError):
            generate_video(small_params(ef_target=0.0), seed=0)

    def test_determinism(self):
        a = generate_video(small_params(), seed=11)
        b = generate_video(small_params(), seed=11)
        assert np.array_equal(a.frames, b.frames)
        assert np.array_equal(a.masks, b.masks)
        assert a.ef == b.ef and a.ed_index == b.ed_index

    def test_target_ef_within_one_point(self):
        # Default-profile geometry; ED/ES phases land on exact frames.
        params = VideoParams(
            image_size=112, num_frames=96, ef_target=60.0, period=24.0,
            phase0=0.0, center=(56.0, 56.0), semi_axes=(26.0, 18.0), angle=0.3,
        )
        video = generate_video(params, seed=7)
        areas = video.masks.reshape(video.masks.shape[0], -1).sum(axis=1)
        recomputed = ef_from_areas(float(areas.max()), float(areas.min()))
        assert video.ef == pytest.approx(recomputed, abs=1e-12)
        assert abs(recomputed - 60.0) <= 1.0

    def test_extrema_match_indices(self):
        rng = np.random.default_rng(42)
        for _ in range(5):
            video = random_video(rng, "test")
            areas = video.masks.reshape(video.masks.shape[0], -1).sum(axis=1)
            assert int(np.argmax(areas)) == video.ed_index
            assert int(np.argmin(areas)) == video.es_index
            assert 10.0 <= video.ef <= 80.0

    def test_ellipse_leaving_frame_rejected(self):
        with pytest.raises(InvalidInputError):
            generate_video(small_params(center=(5.0, 32.0)), seed=0)

    def test_masks_binary_and_frames_u8(self):
        video = generate_video(small_params(), seed=3)
        assert video.frames.dtype == np.uint8
        assert video.masks.dtype == np.uint8
        assert set(np.unique(video.masks)) <= {0, 1}


class TestDegrade:
    def test_identity_at_zero(self):
        video = generate_video(small_params(), seed=5)
        out = degrade(video, 0.0, seed=9)
        assert np.array_equal(out.frames, video.frames)

    def test_saturation_at_one(self):
        video = generate_video(small_params(), seed=5)
        out = degrade(video, 1.0, seed=9)
        assert not out.frames.any()

    def test_exact_zero_count(self):
        video = generate_video(small_params(), seed=5)
        # Start from an all-nonzero copy so zeros are attributable to noise.
        video.frames[video.frames == 0] = 1
        out = degrade(video, 0.5, seed=9)
        per_frame = (out.frames == 0).reshape(out.frames.shape[0], -1).sum(axis=1)
        assert (per_frame == round(0.5 * 64 * 64)).all()

    def test_112_case(self):
        assert round(0.5 * 112 * 112) == 6272

    def test_masks_untouched(self):
        video = generate_video(small_params(), seed=5)
        out = degrade(video, 0.3, seed=9)
        assert np.array_equal(out.masks, video.masks)

    def test_rate_out_of_range(self):
        video = generate_video(small_params(), seed=5)
        with pytest.raises(InvalidInputError):
            degrade(video, 1.5, seed=0)

    def test_positions_uniform_chi_square(self):
        # Aggregate zeroed positions over many seeds; marginal hit counts
        # should be consistent with a uniform choice (p > 0.001).
        h = w = 16
        rate = 0.25
        k = round(rate * h * w)
        n_seeds = 300
        counts = np.zeros(h * w)
        frames = np.ones((1, h, w), dtype=np.uint8)
        from echoef.synth import SyntheticVideo

        video = SyntheticVideo(
            frames=frames, masks=np.zeros_like(frames), ed_index=0, es_index=0,
            ef=50.0, period=10.0,
        )
        for seed in range(n_seeds):
            out = degrade(video, rate, seed=seed)
            counts += (out.frames[0] == 0).reshape(-1)
        expected = n_seeds * k / (h * w)
        chi2 = float(((counts - expected) ** 2 / expected).sum())
        p = stats.chi2.sf(chi2, df=h * w - 1)
        assert p > 0.001


class TestSampleClip:
    def test_arithmetic_sequence(self):
        idx = clip_indices(64, ClipSpec(32, 2, start_offset=0))
        assert idx.tolist() == list(range(0, 64, 2))

    def test_boundary_lengths(self):
        # span = 63: F=63 fits (max index 62), F=62 does not.
        assert clip_indices(63, ClipSpec(32, 2, start_offset=0))[-1] == 62
        with pytest.raises(InvalidInputError):
            clip_indices(62, ClipSpec(32, 2, start_offset=0))

    def test_seeded_start_deterministic(self):
        a = clip_indices(96, ClipSpec(32, 2), seed=77)
        b = clip_indices(96, ClipSpec(32, 2), seed=77)
        assert np.array_equal(a, b)

    def test_sample_clip_shape(self):
        video = generate_video(small_params(), seed=1)
        clip = sample_clip(video, ClipSpec(32, 2), seed=4)
        assert clip.shape == (32, 64, 64)


class TestPersistence:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(0)
        videos = [random_video(rng, "test") for _ in range(3)]
        manifest = str(tmp_path / "manifest.json")
        write_dataset(videos, manifest, str(tmp_path), splits=["train", "val", "test"])
        dataset = read_dataset(manifest)
        assert len(dataset) == 3
        for i, video in enumerate(videos):
            loaded = dataset.load_video(i)
            assert np.array_equal(loaded.frames, video.frames)
            assert np.array_equal(loaded.masks, video.masks)
            assert loaded.ef == video.ef
            assert loaded.ed_index == video.ed_index
            assert loaded.es_index == video.es_index
            assert loaded.period == video.period
        assert dataset.records[1].split == "val"

    def test_empty_dataset(self, tmp_path):
        manifest = str(tmp_path / "manifest.json")
        write_dataset([], manifest, str(tmp_path))
        assert len(read_dataset(manifest)) == 0

    def test_truncated_file(self, tmp_path):
        video = generate_video(small_params(), seed=1)
        path = str(tmp_path / "v.evid")
        write_video_file(path, video.frames)
        blob = open(path, "rb").read()
        open(path, "wb").write(blob[: len(blob) // 2])
        with pytest.raises(FormatError):
            read_video_file(path)

    def test_bad_magic_offset_zero(self, tmp_path):
        path = str(tmp_path / "v.evid")
        with open(path, "wb") as fh:
            fh.write(b"XXXX" + b"\0" * 32)
        with pytest.raises(FormatError) as err:
            read_video_file(path)
        assert err.value.offset == 0
