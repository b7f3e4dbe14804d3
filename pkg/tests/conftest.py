import numpy as np
import pytest

import augdp


@pytest.fixture
def reference_params():
    """Residential battery constants used across the suite."""
    return augdp.BatteryParams(
        alpha=0.999791667,
        eta=0.92,
        u_min_wh=-4000.0,
        u_max_wh=4000.0,
        e_min_wh=0.0,
        e_max_wh=8000.0,
        dt_h=0.5,
    )


@pytest.fixture
def reference_plan():
    """Half-hour day with a 13:30-20:30 on-peak window and a demand price."""
    return augdp.PricingPlan(
        p_on=0.0633e-3, p_off=0.0423e-3, p_d=3.364, t_on=27, t_off=41, steps=48
    )


def synthetic_day(steps=48, seed=11):
    """Seeded evening-peaking load with a midday solar bump."""
    rng = np.random.default_rng(seed)
    k = np.arange(steps)
    load = (
        1.2
        + 2.5 * np.exp(-0.5 * ((k - 0.75 * steps) / (steps / 12.0)) ** 2)
        + 0.3 * rng.random(steps)
    )
    solar = np.clip(3.0 * np.exp(-0.5 * ((k - 0.5 * steps) / (steps / 8.0)) ** 2) - 0.2, 0.0, None)
    return augdp.DayProfile(load, solar)


@pytest.fixture
def reference_day():
    return synthetic_day()


def random_additive_instance(rng, max_states=6, max_inputs=4, max_horizon=6):
    """Random integer-cost instance with a plain stage-additive objective."""
    problem = augdp.random_fs_instance(rng, max_states, max_inputs, max_horizon)
    stage_cost, terminal_cost, _d, _dt = augdp.objectives.split_additive_sup(problem.objective)
    problem.objective = augdp.AdditiveObjective(stage_cost, terminal_cost)
    return problem


def size_capped(rng):
    """(max_inputs, max_horizon) pairs keeping product enumeration small."""
    pairs = [(4, 4), (3, 5), (2, 6), (4, 5), (3, 4), (2, 5)]
    return pairs[int(rng.integers(0, len(pairs)))]
