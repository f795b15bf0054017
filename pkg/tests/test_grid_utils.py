import numpy as np
import pytest

from grid_utils import (
    IndicatorSet, ball_cells, ball_weights, boundary_cells, box_predicate, build_domain, density_ratio,
    dilate, disk_predicate, erode, indicator_from_predicate, measure, perimeter, remove_ball,
    sample_inner_perturbations,
)
from solver_io import ConfigError, DomainError


def test_unit_square_cells_and_spacing():
    domain = build_domain((1.0, 1.0), 128)
    assert domain.shape == (128, 128)
    assert domain.n_active == 16384
    assert domain.h == pytest.approx(1 / 128)
    assert domain.total_measure == pytest.approx(1.0)


def test_rectangle_uses_one_spacing():
    domain = build_domain((2.0, 1.0), (256, 128))
    assert domain.h == pytest.approx(1 / 128)
    assert build_domain((2.0, 1.0), 256).shape == (256, 128)


def test_bad_domains_raise_config_errors():
    with pytest.raises(ConfigError):
        build_domain((1.0,), 16)
    with pytest.raises(ConfigError):
        build_domain((1.0, 1.0), (8, 16))
    with pytest.raises(ConfigError) as info:
        build_domain((1.0, 0.3), 4)
    assert info.value.path == "domain.resolution"


def test_disk_mask_cell_count():
    domain = build_domain((1.0, 1.0), 128, mask=disk_predicate((0.5, 0.5), 0.5))
    assert domain.n_active == pytest.approx(np.pi / 4 * 128 ** 2, rel=1e-2)


def test_measure_of_square_and_empty_set():
    domain = build_domain((1.0, 1.0), 128)
    square = np.zeros(domain.shape, dtype=bool)
    square[10:42, 50:82] = True
    assert measure(IndicatorSet(domain, square)) == pytest.approx(0.0625)
    assert measure(IndicatorSet(domain, np.zeros(domain.shape, dtype=bool))) == 0.0


def test_measure_is_additive_on_disjoint_sets():
    domain = build_domain((1.0, 1.0), 32)
    left = indicator_from_predicate(domain, box_predicate((0.0, 0.0), (0.4, 1.0)))
    disk = indicator_from_predicate(domain, disk_predicate((0.75, 0.5), 0.2))
    assert not np.any((left & disk).support)
    assert measure(left | disk) == pytest.approx(measure(left) + measure(disk))


def test_ball_cells():
    domain = build_domain((1.0, 1.0), 256)
    ball = ball_cells(domain, (0.5, 0.5), 0.25)
    assert measure(ball) == pytest.approx(np.pi / 16, rel=2e-2)
    assert ball_cells(domain, domain.center_of((3, 3)), domain.h).count >= 1
    assert ball_cells(domain, (0.5, 0.5), 2.0).count == domain.n_active
    with pytest.raises(DomainError):
        ball_cells(domain, (0.5, 0.5), 0.5 * domain.h)


def test_ball_weights_integrate_to_ball_area():
    domain = build_domain((1.0, 1.0), 128)
    area = float(np.sum(ball_weights(domain, (0.5, 0.5), 0.3))) * domain.cell_volume
    assert area == pytest.approx(np.pi * 0.09, rel=2e-3)


def test_face_count_perimeter_of_square():
    domain = build_domain((1.0, 1.0), 16)
    square = indicator_from_predicate(domain, box_predicate((0.25, 0.25), (0.75, 0.75)))
    assert square.count == 64
    assert perimeter(square) == pytest.approx(2.0)


def test_face_count_perimeter_of_disk_is_anisotropic():
    domain = build_domain((1.0, 1.0), 256)
    disk = indicator_from_predicate(domain, disk_predicate((0.5, 0.5), 0.3))
    # L1 perimeter of a disk is 8R, not 2 pi R
    assert perimeter(disk) == pytest.approx(8 * 0.3, rel=2e-2)


def test_smoothed_perimeter_of_disk():
    domain = build_domain((1.0, 1.0), 256)
    disk = indicator_from_predicate(domain, disk_predicate((0.5, 0.5), 0.3))
    assert perimeter(disk, mode="smoothed") == pytest.approx(2 * np.pi * 0.3, rel=5e-2)


def test_boundary_band_of_square():
    domain = build_domain((1.0, 1.0), 128)
    square = np.zeros(domain.shape, dtype=bool)
    square[40:72, 40:72] = True
    band = boundary_cells(IndicatorSet(domain, square))
    assert band.count == 4 * 32 - 4

    single = np.zeros(domain.shape, dtype=bool)
    single[5, 7] = True
    assert np.array_equal(boundary_cells(IndicatorSet(domain, single)).support, single)


def test_full_domain_band_follows_the_edge():
    domain = build_domain((1.0, 1.0), 16)
    band = boundary_cells(IndicatorSet(domain, np.ones(domain.shape, dtype=bool)))
    assert band.count == 4 * 16 - 4


def test_density_ratio_examples():
    domain = build_domain((1.0, 1.0), 64)
    full = IndicatorSet(domain, np.ones(domain.shape, dtype=bool))
    assert density_ratio(full, (0.5, 0.5), 0.2) == 1.0

    small = indicator_from_predicate(domain, disk_predicate((0.1, 0.1), 0.05))
    assert density_ratio(small, (0.7, 0.7), 0.1) == 0.0

    half = indicator_from_predicate(domain, lambda x, y: x < 0.5)
    r = 0.2
    assert abs(density_ratio(half, (0.5, 0.5), r) - 0.5) <= 2 * domain.h / r

    with pytest.raises(DomainError):
        density_ratio(half, (0.5, 0.5), domain.h)


def test_dilate_and_erode_square():
    domain = build_domain((1.0, 1.0), 16)
    square = np.zeros(domain.shape, dtype=bool)
    square[4:12, 4:12] = True
    s = IndicatorSet(domain, square)
    assert erode(s).count == 36
    # Cross dilation adds one row per side
    assert dilate(s).count == 64 + 4 * 8


def test_remove_ball_is_inner():
    domain = build_domain((1.0, 1.0), 32)
    disk = indicator_from_predicate(domain, disk_predicate((0.5, 0.5), 0.4))
    cut = remove_ball(disk, (0.5, 0.9), 0.1)
    assert cut.count < disk.count
    assert not np.any(cut.support & ~disk.support)


def test_inner_perturbations_are_subsets_and_reproducible():
    domain = build_domain((1.0, 1.0), 32)
    disk = indicator_from_predicate(domain, disk_predicate((0.5, 0.5), 0.35))
    first = sample_inner_perturbations(disk, 12, np.random.default_rng(3))
    second = sample_inner_perturbations(disk, 12, np.random.default_rng(3))
    assert len(first) == 12
    for (desc, pert), (desc2, pert2) in zip(first, second):
        assert desc["kind"] in ("ball", "erosion")
        assert desc == desc2
        assert np.array_equal(pert.support, pert2.support)
        assert not np.any(pert.support & ~disk.support)
        assert desc["radius"] >= 2 * domain.h * (1 - 1e-12)


def test_cube_in_three_dimensions():
    domain = build_domain((1.0, 1.0, 1.0), 16)
    assert domain.dim == 3
    cube = indicator_from_predicate(domain, box_predicate((0.25, 0.25, 0.25), (0.75, 0.75, 0.75)))
    assert cube.count == 8 ** 3
    assert measure(cube) == pytest.approx(0.125)
    assert perimeter(cube) == pytest.approx(1.5)
    assert boundary_cells(cube).count == 8 ** 3 - 6 ** 3
    assert dilate(cube, 1).count == 8 ** 3 + 6 * 8 ** 2
    assert erode(cube, 1).count == 6 ** 3


def test_ball_in_three_dimensions():
    domain = build_domain((1.0, 1.0, 1.0), 48)
    ball = indicator_from_predicate(domain, disk_predicate((0.5, 0.5, 0.5), 0.3))
    volume = 4.0 / 3.0 * np.pi * 0.3 ** 3
    assert measure(ball) == pytest.approx(volume, rel=3e-2)
    assert float(np.sum(ball_weights(domain, (0.5, 0.5, 0.5), 0.3))) * domain.cell_volume == pytest.approx(volume, rel=1e-2)
    assert perimeter(ball, mode="smoothed") == pytest.approx(4 * np.pi * 0.3 ** 2, rel=0.1)
    assert perimeter(ball) > perimeter(ball, mode="smoothed")
