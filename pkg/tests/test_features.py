"""
特征提取测试
"""
import math

import numpy as np
import pytest

from docbin.core.interfaces import FeatureFamily, GrayImage
from docbin.exceptions import InputError
from docbin.services.features import (
    FEATURE_SCHEMA,
    FeatureExtractor,
    ImageArtifacts,
    estimate_stroke_width,
    etni_values,
    extract_features,
    extract_features_at,
    feat_etni,
    feat_howe,
    feat_intensity,
    feat_lip,
    feat_local_stats,
    feat_ltsi,
    feat_otsu_diff,
    feat_rdi,
    feat_su,
    global_features,
    howe_laplacian,
    lip_transform,
    local_windows,
    ltp_code,
    percentile,
    rdi_values,
)


def _block(data, x, y, size):
    height, width = data.shape
    x0, x1 = max(0, x - size // 2), min(width, x - size // 2 + size)
    y0, y1 = max(0, y - size // 2), min(height, y - size // 2 + size)
    return data[y0:y1, x0:x1].astype(np.float64)


def _bilinear(data, yy, xx):
    height, width = data.shape
    yy = min(max(yy, 0.0), height - 1.0)
    xx = min(max(xx, 0.0), width - 1.0)
    y0, x0 = int(math.floor(yy)), int(math.floor(xx))
    y1, x1 = min(y0 + 1, height - 1), min(x0 + 1, width - 1)
    fy, fx = yy - y0, xx - x0
    return ((1 - fy) * (1 - fx) * data[y0, x0] + (1 - fy) * fx * data[y0, x1]
            + fy * (1 - fx) * data[y1, x0] + fy * fx * data[y1, x1])


def _band(shape, direction, x, y, thickness):
    ys, xs = np.indices(shape)
    half = thickness // 2
    if direction == "row":
        return np.abs(ys - y) <= half
    if direction == "col":
        return np.abs(xs - x) <= half
    if direction == "diag":
        return np.abs((ys - xs) - (y - x)) <= half
    return np.abs((ys + xs) - (y + x)) <= half


class TestSchema:
    def test_dimension_and_family_sizes(self):
        assert FEATURE_SCHEMA.total_dim == 142
        sizes = [s.stop - s.start for s in FEATURE_SCHEMA.family_slices().values()]
        assert sizes == [1, 1, 4, 4, 4, 4, 4, 4, 18, 30, 4, 64]
        assert [f.dims for f in FeatureFamily] == sizes

    def test_names_are_unique_and_fingerprint_stable(self):
        assert len(set(FEATURE_SCHEMA.names)) == 142
        assert len(FEATURE_SCHEMA.fingerprint) == 16
        assert FEATURE_SCHEMA.fingerprint == FeatureExtractor().fingerprint

    def test_family_order(self):
        families = [entry.family for entry in FEATURE_SCHEMA.entries]
        order = list(FeatureFamily)
        assert families == sorted(families, key=order.index)


class TestExtraction:
    def test_full_matrix_shape(self, random_image):
        im = random_image(12, 15)
        matrix = extract_features(im)
        assert matrix.rows.shape == (180, 142)
        assert matrix.rows.dtype == np.float32
        assert np.isfinite(matrix.rows).all()

    def test_module_functions_agree(self, random_image):
        im = random_image(8, 9)
        assert np.array_equal(extract_features_at(im, np.arange(im.size)).rows, extract_features(im).rows)

    def test_subset_matches_full_rows(self, rng, random_image):
        im = random_image(16, 20)
        extractor = FeatureExtractor()
        art = extractor.prepare(im, stroke_width=2)
        full = extractor.extract_at(art, np.arange(im.size)).rows
        pixels = rng.choice(im.size, size=40, replace=False)
        subset = extractor.extract_at(art, pixels).rows
        assert np.array_equal(subset, full[pixels])

    def test_chunks_cover_image_in_order(self, random_image):
        im = random_image(9, 11)
        extractor = FeatureExtractor()
        art = extractor.prepare(im, stroke_width=1)
        chunks = list(extractor.iter_chunks(art, 25))
        pixels = np.concatenate([p for p, _ in chunks])
        assert pixels.tolist() == list(range(99))
        assert sum(m.n_rows for _, m in chunks) == 99

    def test_out_of_range_pixel(self, random_image):
        im = random_image(5, 5)
        with pytest.raises(InputError):
            FeatureExtractor().extract_at(im, [25])

    def test_single_pixel_image(self):
        im = GrayImage(np.array([[120]], dtype=np.uint8))
        matrix = extract_features(im)
        assert matrix.rows.shape == (1, 142)
        assert np.isfinite(matrix.rows).all()

    @pytest.mark.parametrize("shape", [(1, 1), (7, 30), (24, 24), (32, 17)])
    def test_every_column_within_documented_range(self, random_image, shape):
        rows = extract_features(random_image(*shape)).rows
        self._assert_ranges(rows)

    def test_synthetic_page_columns_within_range(self, small_page):
        im, _ = small_page
        self._assert_ranges(extract_features(im).rows)

    @staticmethod
    def _assert_ranges(rows):
        assert rows.shape[1] == FEATURE_SCHEMA.total_dim
        assert np.isfinite(rows).all()
        for family, columns in FEATURE_SCHEMA.family_slices().items():
            block = rows[:, columns]
            low = -1.0 if family == FeatureFamily.OTSU_DIFF else 0.0
            assert block.min() >= low, family
            assert block.max() <= 1.0, family

    def test_repeated_extraction_is_identical(self, random_image):
        im = random_image(20, 26)
        first = extract_features(im)
        second = FeatureExtractor().extract(im)
        assert first.rows.tobytes() == second.rows.tobytes()
        assert first.schema_fingerprint == second.schema_fingerprint

    def test_channel_maps(self, random_image):
        im = random_image(10, 12)
        extractor = FeatureExtractor()
        art = extractor.prepare(im, stroke_width=2)
        maps = extractor.channel_maps(art, ["local_int", "su_1", "rdi_1_zero"])
        assert maps["local_int"].shape == (10, 12)
        assert np.allclose(maps["local_int"], im.data / 255.0)
        full = extractor.extract_at(art, np.arange(im.size)).rows
        column = FEATURE_SCHEMA.index_of("su_1")
        assert np.allclose(maps["su_1"].ravel(), full[:, column], atol=1e-6)


class TestIntensityFamilies:
    def test_intensity_and_otsu_diff(self):
        data = np.array([[50, 200], [50, 200]], dtype=np.uint8)
        im = GrayImage(data)
        assert np.allclose(feat_intensity(im), data / 255.0)
        assert np.allclose(feat_otsu_diff(im), (data.astype(float) - 51) / 255.0)

    def test_local_stats_windows(self, random_image):
        im = random_image(14, 18)
        stats = feat_local_stats(im, 2)
        assert stats.shape == (14, 18, 8)
        for channel, window in enumerate(local_windows(2)):
            block = _block(im.data, 6, 7, window)
            assert stats[7, 6, channel] == pytest.approx(block.mean() / 255.0, abs=1e-9)
            assert stats[7, 6, 4 + channel] == pytest.approx(block.std() / 255.0, abs=1e-9)

    def test_etni_matches_brute_force(self, rng, random_image):
        im = random_image(20, 20)
        etni = feat_etni(im, 2)
        for _ in range(30):
            x, y = int(rng.integers(0, 20)), int(rng.integers(0, 20))
            for channel, window in enumerate(local_windows(2)):
                block = _block(im.data, x, y, window)
                mean, std = block.mean(), block.std()
                value = float(im.data[y, x])
                expected = math.exp((value - mean) / std) if std > 0 and value <= mean else 1.0
                assert etni[y, x, channel] == pytest.approx(expected, abs=1e-7)

    def test_ltsi_matches_brute_force(self, rng, random_image):
        im = random_image(20, 20)
        ltsi = feat_ltsi(im, 2)
        for _ in range(30):
            x, y = int(rng.integers(0, 20)), int(rng.integers(0, 20))
            for channel, window in enumerate(local_windows(2)):
                block = _block(im.data, x, y, window)
                mean, std = block.mean(), block.std()
                ratio = float(im.data[y, x]) / mean - 1.0 if mean > 0 else 0.0
                expected = 1.0 / (1.0 + math.exp(-ratio / (std - 128.0)))
                assert ltsi[y, x, channel] == pytest.approx(expected, abs=1e-7)

    @pytest.mark.parametrize("mean, std", [(150.0, 25.0), (40.0, 3.0), (254.0, 80.0)])
    def test_etni_monotone_in_intensity(self, mean, std):
        intensity = np.arange(256, dtype=np.float64)
        values = etni_values(intensity, np.full(256, mean), np.full(256, std))
        below = intensity <= mean
        assert np.all(np.diff(values[below]) >= 0)
        assert np.all(values[~below] == 1.0)
        assert np.all((values > 0) & (values <= 1))

    def test_etni_is_one_on_flat_region(self):
        im = GrayImage(np.full((8, 8), 60, dtype=np.uint8))
        assert np.all(feat_etni(im, 1) == 1.0)


class TestContrastFamilies:
    def test_su_range_and_constant_image(self, random_image):
        su = feat_su(random_image(16, 16), 2)
        assert su.min() >= 0 and su.max() <= 1
        flat = feat_su(GrayImage(np.full((6, 6), 90, dtype=np.uint8)), 2)
        assert np.all(flat == 0)

    def test_howe_laplacian_raw_scale(self, random_image):
        im = random_image(9, 13)
        data = im.data.astype(np.float64)
        padded = np.pad(data, 1, mode='edge')
        expected = (padded[:-2, 1:-1] + padded[2:, 1:-1] + padded[1:-1, :-2] + padded[1:-1, 2:]
                    - 4 * data)
        assert np.allclose(howe_laplacian(im, 1), expected)

    def test_howe_maps_normalized(self, random_image):
        howe = feat_howe(random_image(15, 15), 2)
        assert howe.shape == (15, 15, 4)
        for channel in range(4):
            values = howe[..., channel]
            assert values.min() == pytest.approx(0.0)
            assert values.max() == pytest.approx(1.0)


class TestPercentiles:
    def test_percentile_counts(self, random_image):
        im = random_image(10, 10)
        region = np.zeros((10, 10), dtype=bool)
        region[2:7, 3:9] = True
        x, y = 4, 5
        block = im.data[region]
        assert percentile(im, (x, y), region) == pytest.approx((block <= im.data[y, x]).mean())

    def test_percentile_requires_pixel_in_region(self, random_image):
        im = random_image(4, 4)
        with pytest.raises(InputError):
            percentile(im, (0, 0), np.zeros((4, 4), dtype=bool))

    def test_band_percentiles_match_brute_force(self, rng, random_image):
        im = random_image(13, 17)
        art = ImageArtifacts(im, stroke_width=2)
        ys = rng.integers(0, 13, size=15)
        xs = rng.integers(0, 17, size=15)
        table = art.percentiles_at(ys, xs)
        everything = np.ones(im.shape, dtype=bool)
        for row, (y, x) in enumerate(zip(ys, xs)):
            y, x = int(y), int(x)
            assert table[row, 0] == pytest.approx(percentile(im, (x, y), everything))
            column = 1
            for direction in ("row", "col", "diag", "anti"):
                for thickness in local_windows(2):
                    region = _band(im.shape, direction, x, y, thickness)
                    assert table[row, column] == pytest.approx(percentile(im, (x, y), region))
                    column += 1

    def test_lip_transform(self):
        values = lip_transform(np.array([0.0, 0.005, 0.01, 0.1, 1.0]), 0.01)
        assert values.tolist() == pytest.approx([1.0, 1.0, 1.0, 0.5, 0.0])

    def test_lip_invariant_under_monotone_remap(self, random_image):
        levels = np.array([0, 40, 80, 120, 160, 200, 240, 255])
        im = random_image(18, 22, levels=levels)
        for gamma in (0.5, 2.0):
            mapping = np.arange(256, dtype=np.float64)
            mapping = np.rint(255.0 * (mapping / 255.0) ** gamma).astype(np.uint8)
            assert np.all(np.diff(mapping[levels].astype(int)) > 0)
            remapped = GrayImage(mapping[im.data])
            assert np.array_equal(feat_lip(im, 2), feat_lip(remapped, 2))


class TestRdi:
    def test_counts_match_brute_force(self, rng, random_image):
        im = random_image(15, 15)
        data = im.data.astype(np.float64)
        ys = rng.integers(0, 15, size=20)
        xs = rng.integers(0, 15, size=20)
        for radius in (1.0, 2.0, 4.0):
            values = rdi_values(data, ys, xs, radius, 8.0)
            for row, (y, x) in enumerate(zip(ys, xs)):
                center = data[y, x]
                pos = neg = 0
                for index in range(8):
                    angle = 2 * math.pi * index / 8
                    neighbor = round(_bilinear(data, y + round(radius * math.sin(angle), 9),
                                               x + round(radius * math.cos(angle), 9)), 6)
                    pos += neighbor >= center + 8
                    neg += neighbor <= center - 8
                zero = 8 - pos - neg
                assert values[row, :3].tolist() == pytest.approx([zero / 8, neg / 8, pos / 8])

    def test_frequencies_sum_to_one(self, random_image):
        rdi = feat_rdi(random_image(12, 12), 2)
        for radius in range(5):
            total = rdi[..., 6 * radius] + rdi[..., 6 * radius + 1] + rdi[..., 6 * radius + 2]
            assert np.allclose(total, 1.0)

    def test_constant_image_is_all_zero_code(self):
        rdi = feat_rdi(GrayImage(np.full((7, 9), 33, dtype=np.uint8)), 1)
        for radius in range(5):
            assert np.all(rdi[..., 6 * radius] == 1.0)
            # pos/(pos+zero)=0，neg/(neg+pos)=0/0 记 0，zero/(zero+neg)=1
            assert np.all(rdi[..., 6 * radius + 3] == 0.0)
            assert np.all(rdi[..., 6 * radius + 4] == 0.0)
            assert np.all(rdi[..., 6 * radius + 5] == 1.0)

    def test_ltp_code_agrees_with_counts(self, random_image):
        im = random_image(9, 9)
        data = im.data.astype(np.float64)
        codes = [ltp_code(im, (4, 4), index, 2.0, 8.0) for index in range(8)]
        values = rdi_values(data, np.array([4]), np.array([4]), 2.0, 8.0)[0]
        assert codes.count(1) / 8 == pytest.approx(values[2])
        assert codes.count(-1) / 8 == pytest.approx(values[1])


class TestGlobalFeatures:
    def test_histograms_normalized(self, random_image):
        g = global_features(random_image(20, 20))
        assert g.int_hist.sum() == pytest.approx(1.0)
        assert g.int_loghist.sum() == pytest.approx(1.0)
        assert g.perc_loghist.sum() == pytest.approx(1.0)
        assert g.vector().shape == (68,)

    def test_constant_image(self):
        g = global_features(GrayImage(np.full((5, 5), 51, dtype=np.uint8)))
        assert g.int_mean == pytest.approx(0.2)
        assert g.int_std == 0.0
        assert g.perc_mean == 1.0


class TestStrokeWidth:
    """
    笔画宽度取被边缘包围的前景游程众数

    游程在水平与垂直两个方向上都统计，因此水平条与垂直条都能得到条宽。
    """

    @pytest.mark.parametrize("thickness", [3, 5])
    def test_horizontal_bars(self, thickness):
        data = np.full((64, 64), 255, dtype=np.uint8)
        for top in range(8, 60, 12):
            data[top:top + thickness, :] = 0
        assert estimate_stroke_width(GrayImage(data)) == thickness

    def test_vertical_bars(self):
        data = np.full((64, 64), 255, dtype=np.uint8)
        for left in range(8, 60, 12):
            data[:, left:left + 4] = 0
        assert estimate_stroke_width(GrayImage(data)) == 4

    def test_blank_image(self):
        assert estimate_stroke_width(GrayImage(np.full((10, 10), 200, dtype=np.uint8))) == 1

    def test_clamped_to_quarter_size(self):
        data = np.full((12, 40), 255, dtype=np.uint8)
        data[:, 10:30] = 0
        assert estimate_stroke_width(GrayImage(data)) <= 3
