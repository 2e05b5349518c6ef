import numpy as np
import pytest

from adada import datasets
from adada.datasets import DomainDataset, ShiftSpec
from adada.errors import ContractError, ParseError


class TestDomainDataset:
    def test_basic(self):
        ds = DomainDataset(np.zeros((3, 2)), [0, 1, 0])
        assert len(ds) == 3 and ds.dim == 2
        assert ds.labels.dtype == np.int64

    def test_nonfinite_rejected(self):
        with pytest.raises(ContractError):
            DomainDataset(np.array([[0.0, np.nan]]), None)

    def test_label_length_mismatch(self):
        with pytest.raises(ContractError):
            DomainDataset(np.zeros((3, 2)), [0, 1])

    def test_bad_domain(self):
        with pytest.raises(ContractError):
            DomainDataset(np.zeros((1, 2)), None, domain="middle")

    def test_negative_label_rejected(self):
        with pytest.raises(ContractError):
            DomainDataset(np.zeros((2, 2)), [0, -1])


class TestTwoMoons:
    def test_noiseless_geometry(self):
        ds = datasets.two_moons(8, noise_sigma=0.0, seed=0)
        # first point of class 0 is t=0 on the unit arc: (1, 0)
        np.testing.assert_allclose(ds.features[0], [1.0, 0.0], atol=1e-15)
        # class 1 mirrors class 0: (1 - cx, 0.5 - cy)
        np.testing.assert_allclose(ds.features[4:],
                                   np.column_stack([1.0 - ds.features[:4, 0],
                                                    0.5 - ds.features[:4, 1]]),
                                   atol=1e-15)
        assert ds.labels.tolist() == [0] * 4 + [1] * 4

    def test_noiseless_on_unit_circle(self):
        ds = datasets.two_moons(40)
        r = np.linalg.norm(ds.features[:20], axis=1)
        np.testing.assert_allclose(r, 1.0, atol=1e-12)

    def test_seed_determinism(self):
        a = datasets.two_moons(100, 0.1, seed=5)
        b = datasets.two_moons(100, 0.1, seed=5)
        assert a.features.tobytes() == b.features.tobytes()
        c = datasets.two_moons(100, 0.1, seed=6)
        assert a.features.tobytes() != c.features.tobytes()

    def test_odd_n_rejected(self):
        with pytest.raises(ContractError):
            datasets.two_moons(7)

    def test_balanced_classes(self):
        ds = datasets.two_moons(200, 0.2, seed=1)
        assert (ds.labels == 0).sum() == 100
        assert (ds.labels == 1).sum() == 100


class TestApplyShift:
    def test_rotation_90_degrees(self):
        base = DomainDataset(np.array([[1.0, 0.0], [0.0, 2.0]]), [0, 1])
        out = datasets.apply_shift(base, ShiftSpec(rotation_degrees=90.0))
        np.testing.assert_allclose(out.features, [[0.0, 1.0], [-2.0, 0.0]], atol=1e-12)
        assert out.domain == "target"
        np.testing.assert_array_equal(out.labels, base.labels)

    def test_translation(self):
        base = DomainDataset(np.zeros((2, 2)), None)
        out = datasets.apply_shift(base, ShiftSpec(translation=(1.0, -2.0)))
        np.testing.assert_allclose(out.features, [[1.0, -2.0]] * 2)
        assert out.labels is None

    def test_noise_uses_seed(self):
        base = datasets.two_moons(50, 0.0, seed=0)
        a = datasets.apply_shift(base, ShiftSpec(noise_sigma=0.1), seed=3)
        b = datasets.apply_shift(base, ShiftSpec(noise_sigma=0.1), seed=3)
        c = datasets.apply_shift(base, ShiftSpec(noise_sigma=0.1), seed=4)
        assert a.features.tobytes() == b.features.tobytes()
        assert a.features.tobytes() != c.features.tobytes()

    def test_zero_shift_identity(self):
        base = datasets.two_moons(20, 0.05, seed=2)
        out = datasets.apply_shift(base, ShiftSpec())
        np.testing.assert_allclose(out.features, base.features, atol=1e-15)

    def test_rotation_preserves_norms(self):
        base = datasets.two_moons(30, 0.1, seed=4)
        out = datasets.apply_shift(base, ShiftSpec(rotation_degrees=37.0))
        np.testing.assert_allclose(np.linalg.norm(out.features, axis=1),
                                   np.linalg.norm(base.features, axis=1), rtol=1e-12)

    def test_negative_noise_rejected(self):
        with pytest.raises(ContractError):
            ShiftSpec(noise_sigma=-0.1)


class TestGaussianBlobs:
    def test_zero_sigma_exact_centers(self):
        ds = datasets.gaussian_blobs([[0.0, 0.0], [5.0, 5.0]], 3, sigma=0.0)
        np.testing.assert_array_equal(ds.features[:3], np.zeros((3, 2)))
        np.testing.assert_array_equal(ds.features[3:], np.full((3, 2), 5.0))
        assert ds.labels.tolist() == [0, 0, 0, 1, 1, 1]

    def test_single_center_rejected(self):
        with pytest.raises(ContractError):
            datasets.gaussian_blobs([[0.0, 0.0]], 5, sigma=1.0)

    def test_sample_mean_near_center(self):
        ds = datasets.gaussian_blobs([[0.0, 0.0], [10.0, 0.0]], 2000, sigma=0.5, seed=0)
        np.testing.assert_allclose(ds.features[:2000].mean(axis=0), [0, 0], atol=0.05)


class TestCsvRoundTrip:
    def test_labeled_round_trip(self, tmp_path):
        ds = datasets.two_moons(60, 0.1, seed=9)
        path = tmp_path / "d.csv"
        datasets.save_csv(ds, path)
        loaded = datasets.load_csv(path)
        # 12 significant digits: values agree to ~1e-12 relative
        np.testing.assert_allclose(loaded.features, ds.features, rtol=1e-11, atol=1e-13)
        np.testing.assert_array_equal(loaded.labels, ds.labels)
        assert loaded.domain == ds.domain

    def test_save_deterministic_bytes(self, tmp_path):
        ds = datasets.two_moons(20, 0.1, seed=0)
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        datasets.save_csv(ds, a)
        datasets.save_csv(ds, b)
        assert a.read_bytes() == b.read_bytes()

    def test_unlabeled_round_trip(self, tmp_path):
        ds = datasets.strip_labels(
            datasets.apply_shift(datasets.two_moons(10), ShiftSpec(rotation_degrees=15)))
        path = tmp_path / "t.csv"
        datasets.save_csv(ds, path)
        loaded = datasets.load_csv(path)
        assert loaded.labels is None
        assert loaded.domain == "target"

    def test_header_format(self, tmp_path):
        path = tmp_path / "h.csv"
        datasets.save_csv(datasets.two_moons(2), path)
        assert path.read_text().splitlines()[0] == "f0,f1,label,domain"

    def test_header_only_gives_empty(self, tmp_path):
        path = tmp_path / "e.csv"
        path.write_text("f0,f1,label,domain\n")
        loaded = datasets.load_csv(path)
        assert len(loaded) == 0

    @pytest.mark.parametrize("body,fragment", [
        ("", "header"),
        ("x0,x1,label,domain\n", "line 1"),
        ("f0,f1,label,domain\n1.0,2.0,0\n", "line 2"),
        ("f0,f1,label,domain\n1.0,abc,0,source\n", "line 2"),
        ("f0,f1,label,domain\n1.0,2.0,zero,source\n", "line 2"),
        ("f0,f1,label,domain\n1.0,2.0,0,middle\n", "line 2"),
    ])
    def test_parse_errors_name_the_line(self, tmp_path, body, fragment):
        path = tmp_path / "bad.csv"
        path.write_text(body)
        with pytest.raises(ParseError, match=fragment):
            datasets.load_csv(path)

    def test_mixed_labels_rejected(self, tmp_path):
        path = tmp_path / "mix.csv"
        path.write_text("f0,f1,label,domain\n1.0,2.0,0,source\n1.0,2.0,,source\n")
        with pytest.raises(ParseError):
            datasets.load_csv(path)
