import numpy as np
import pytest

from lsbp.synthetic import (
    SyntheticSpec,
    build_dataset,
    generate_synthetic,
    two_component_spec,
)


class TestSpec:
    def test_validation(self):
        with pytest.raises(ValueError):
            SyntheticSpec(n=10, weight_logits=(), kernel_coefs=((0.0, 1.0),),
                          sigma2=(1.0, 1.0))
        with pytest.raises(ValueError):
            SyntheticSpec(n=10, weight_logits=((0.0, 0.0),),
                          kernel_coefs=((0.0, 1.0), (1.0, 0.0)), sigma2=(1.0, -1.0))
        with pytest.raises(ValueError):
            SyntheticSpec(n=10, weight_logits=(), kernel_coefs=((0.0, 1.0),),
                          sigma2=(1.0,), x_dist="cauchy")

    def test_dict_round_trip(self):
        spec = two_component_spec(n=50, seed=3)
        assert SyntheticSpec.from_dict(spec.to_dict()) == spec


class TestGenerate:
    def test_single_component_labels(self):
        spec = SyntheticSpec(n=200, weight_logits=(), kernel_coefs=((1.0, 0.5),),
                             sigma2=(0.4,), seed=1)
        sim = generate_synthetic(spec)
        assert np.all(sim.labels == 0)

    def test_fixed_seed_reproducibility(self):
        a = generate_synthetic(two_component_spec(n=100, seed=9))
        b = generate_synthetic(two_component_spec(n=100, seed=9))
        np.testing.assert_array_equal(a.y, b.y)
        np.testing.assert_array_equal(a.labels, b.labels)
        np.testing.assert_array_equal(a.dataset.Psi, b.dataset.Psi)

    def test_component_frequencies_match_mean_weights(self):
        spec = SyntheticSpec(n=100_000, weight_logits=((0.5, -1.5), (-0.3, 0.8)),
                             kernel_coefs=((0.0, 1.0), (2.0, 0.0), (-2.0, 0.5)),
                             sigma2=(0.3, 0.3, 0.3), seed=17)
        sim = generate_synthetic(spec)
        mean_w = sim.true_weights.mean(axis=0)
        freq = np.bincount(sim.labels, minlength=3) / spec.n
        se = np.sqrt(mean_w * (1 - mean_w) / spec.n)
        assert np.all(np.abs(freq - mean_w) < 3 * se + 1e-4)

    def test_dataset_shapes_and_transform(self):
        sim = generate_synthetic(two_component_spec(n=80, seed=0), num_basis=5)
        data = sim.dataset
        assert data.Lambda.shape == (80, 2)
        assert data.Psi.shape == (80, 6)
        assert data.transform is not None
        # model-scale columns are standardized
        assert data.Lambda[:, 1].mean() == pytest.approx(0.0, abs=1e-10)
        assert data.model_y.std(ddof=1) == pytest.approx(1.0, rel=1e-10)
        # original-units response preserved
        np.testing.assert_array_equal(data.y, sim.y)


class TestBuildDataset:
    def test_no_standardization_keeps_values(self):
        rng = np.random.default_rng(0)
        x = rng.uniform(0, 10, 50)
        y = rng.normal(size=50)
        data = build_dataset(x, y, num_basis=3, standardize_x=False, standardize_y=False)
        np.testing.assert_array_equal(data.Lambda[:, 1], x)
        np.testing.assert_array_equal(data.model_y, y)
        assert data.transform.x.scale == 1.0
