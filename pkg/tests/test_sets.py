import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spectrolab.grid import build_torus
from spectrolab.sets import (
    ObservationSet,
    SetSpec,
    ball_scaling,
    generate_set,
    greedy_cover_count,
    hausdorff_content,
    set_spec_from_dict,
    verify_density,
    write_set_csv,
)

CANTOR_N = math.log(2) / math.log(3)


def _from_mask(grid, mask):
    return ObservationSet(grid, mask, "density", 1.0, 0.0)


def test_full_set_density():
    g = build_torus(1, 1.0, 64)
    obs = generate_set(SetSpec("full"), g)
    assert obs.mask.all()
    for R in (0.1, 0.25):
        rep = verify_density(obs, R, g.ball_measure(R))
        assert rep.passed and rep.min_measure == pytest.approx(g.ball_measure(R))


def test_interval_half_torus():
    g = build_torus(1, 8.0, 64)
    obs = generate_set(SetSpec("interval"), g)
    assert obs.measure == pytest.approx(4.0)
    rep = verify_density(obs, 1.0, 0.1)
    assert not rep.passed and rep.min_measure == 0.0


def test_periodic_balls_fraction():
    g = build_torus(1, 1.0, 256)
    obs = generate_set(SetSpec("periodic-balls", {"radius": 0.1, "pitch": 0.5, "R": 0.5}), g)
    # two balls of diameter 0.2 on a unit torus: about 40% of the nodes
    assert obs.nodes.size == 2 * 51
    assert obs.measure == pytest.approx(0.4, abs=0.01)
    rep = verify_density(obs, 0.25, 2 * 0.1 * (1 - 0.01))
    assert rep.passed


def test_periodic_balls_pitch_must_divide():
    g = build_torus(1, 1.0, 64)
    with pytest.raises(ValueError, match="pitch"):
        generate_set(SetSpec("periodic-balls", {"radius": 0.1, "pitch": 0.3}), g)


def test_cantor_dust_construction():
    g = build_torus(1, 1.0, 3**7)
    obs = generate_set(SetSpec("cantor-dust", {"depth": 5}), g)
    assert obs.content_dim == pytest.approx(CANTOR_N)
    assert obs.construction["finest_interval"] == pytest.approx(3.0**-5)
    assert obs.construction["resolved"]
    # 2^5 intervals of 3^2 nodes each (plus one shared endpoint per closed interval pair)
    assert 32 * 9 <= obs.nodes.size <= 32 * 10


def test_cantor_dust_resolution_flag():
    g = build_torus(1, 1.0, 81)
    obs = generate_set(SetSpec("cantor-dust", {"depth": 5}), g)
    assert not obs.construction["resolved"]


def test_fat_cantor_positive_measure():
    g = build_torus(1, 1.0, 1024)
    obs = generate_set(SetSpec("fat-cantor", {"depth": 4, "removed_fraction": 0.25}), g)
    expected = np.prod([1 - 0.25**k for k in range(1, 5)])
    assert obs.measure == pytest.approx(expected, abs=0.02)


@given(st.integers(0, 1000))
@settings(max_examples=10, deadline=None)
def test_random_density_meets_delta(seed):
    g = build_torus(1, 4.0, 64)
    delta = 0.3 * g.ball_measure(0.5)
    obs = generate_set(SetSpec("random-density", {"delta": delta, "R": 0.5, "seed": seed}), g)
    assert verify_density(obs, 0.5, delta).passed
    assert obs.delta >= delta - 1e-12
    again = generate_set(SetSpec("random-density", {"delta": delta, "R": 0.5, "seed": seed}), g)
    assert np.array_equal(obs.mask, again.mask)


def test_random_density_rejects_impossible_delta():
    g = build_torus(1, 4.0, 64)
    with pytest.raises(ValueError, match="exceeds"):
        generate_set(SetSpec("random-density", {"delta": 5.0, "R": 0.5, "seed": 0}), g)


def test_unknown_kind_and_empty():
    g = build_torus(1, 1.0, 16)
    with pytest.raises(ValueError, match="unknown"):
        generate_set(SetSpec("blob"), g)
    with pytest.raises(ValueError, match="set.kind"):
        set_spec_from_dict({"depth": 3})


def test_singleton_content():
    g = build_torus(1, 1.0, 64)
    mask = np.zeros(64, dtype=bool)
    mask[10] = True
    est = hausdorff_content(_from_mask(g, mask), 1.0, 0.25)
    assert est.upper <= g.spacing * (1 + 1e-12)
    assert est.lower <= est.upper


@pytest.mark.parametrize("length", [0.25, 0.5])
def test_interval_content_within_factor_two(length):
    g = build_torus(1, 4.0, 256)
    obs = generate_set(SetSpec("interval", {"start": 0.0, "stop": length}), g)
    est = hausdorff_content(obs, 1.0, 1.0)
    assert length / 2 <= est.upper <= 2 * length
    assert est.lower <= est.upper


def test_cantor_content_brackets_known_value():
    # the middle-third set has unit H^s measure with diameters, i.e. 2^-s with radii
    g = build_torus(1, 1.0, 3**7)
    est = hausdorff_content(generate_set(SetSpec("cantor-dust", {"depth": 5}), g), CANTOR_N, 0.25)
    assert est.lower <= 2**-CANTOR_N <= est.upper
    assert est.upper / est.lower <= 4


def test_content_monotone_on_nested_sets():
    g = build_torus(1, 1.0, 3**6)
    coarse = generate_set(SetSpec("cantor-dust", {"depth": 3}), g)
    fine = generate_set(SetSpec("cantor-dust", {"depth": 4}), g)
    assert np.all(coarse.mask[fine.mask])
    assert hausdorff_content(fine, CANTOR_N, 0.25).upper <= hausdorff_content(coarse, CANTOR_N, 0.25).upper


def test_upper_bound_subadditive_on_separated_pair():
    g = build_torus(1, 4.0, 256)
    a = generate_set(SetSpec("interval", {"start": 0.0, "stop": 0.5}), g)
    b = generate_set(SetSpec("interval", {"start": 2.0, "stop": 2.75}), g)
    both = _from_mask(g, a.mask | b.mask)
    ua, ub, uab = (hausdorff_content(s, 1.0, 0.5).upper for s in (a, b, both))
    assert uab <= ua + ub + 1e-12


@pytest.mark.parametrize("eps", [0.05, 0.1, 0.3])
def test_radius_cap_inequality(eps):
    # radii <= 4R give sum r^n <= (4R)^eps sum r^(n - eps)
    g = build_torus(1, 1.0, 3**6)
    obs = generate_set(SetSpec("cantor-dust", {"depth": 4}), g)
    cap = 0.25
    hi = hausdorff_content(obs, CANTOR_N, cap).upper
    lo = hausdorff_content(obs, CANTOR_N - eps, cap).upper
    assert lo >= cap**-eps * hi * (1 - 1e-12)


def test_order_validation():
    g = build_torus(1, 1.0, 64)
    obs = generate_set(SetSpec("full"), g)
    with pytest.raises(ValueError):
        hausdorff_content(obs, 1.5, 0.25)
    with pytest.raises(ValueError):
        hausdorff_content(obs, 1.0, g.spacing / 2)


def test_greedy_cover_count_full_interval():
    g = build_torus(1, 1.0, 60)
    obs = generate_set(SetSpec("full"), g)
    # a ball of radius 2h contains the cells of 3 nodes, so 60 / 3 balls tile the torus
    assert greedy_cover_count(obs, 2 * g.spacing) == 20


def test_ball_scaling_full_interval():
    # uniform measure on the whole unit torus: nu(B(x, r)) = (2r + h) / 1 in node counts
    g = build_torus(1, 1.0, 100)
    rows = ball_scaling(generate_set(SetSpec("full"), g), 1.0, [0.05, 0.1])
    for r, lo, hi in rows:
        assert lo == hi == pytest.approx((2 * round(r / g.spacing) + 1) / (100 * r))


def test_ball_scaling_cantor_window():
    g = build_torus(1, 1.0, 3**7)
    rows = ball_scaling(generate_set(SetSpec("cantor-dust", {"depth": 5}), g), CANTOR_N, [3.0**-2, 3.0**-3])
    assert rows[:, 1].min() >= 0.5 and rows[:, 2].max() <= 4.0


def test_set_csv(tmp_path):
    g = build_torus(1, 1.0, 16)
    obs = generate_set(SetSpec("interval"), g)
    write_set_csv(obs, tmp_path / "s.csv")
    assert (tmp_path / "s.csv").read_text().splitlines() == ["node"] + [str(i) for i in range(8)]
