import numpy as np
import pytest
from hypothesis import settings

from ehrl.env import ScenarioConfig

settings.register_profile("ehrl", deadline=None, max_examples=60)
settings.load_profile("ehrl")


def unit_scenario(**kw) -> ScenarioConfig:
    """Scenario with F = 1 Hz and no rate divisor, so rates are plain log2(1 + snr)."""
    base = dict(n_ues=2, k_channels=1, battery_capacity=3, tx_power=2, bandwidth_hz=1.0, rate_unit_divisor=1.0,
                ue_speed_mps=0.0, fading_enabled=False)
    base.update(kw)
    return ScenarioConfig(**base)


def gains_for_snr(cfg: ScenarioConfig, snr) -> np.ndarray:
    return np.asarray(snr, dtype=float) * cfg.noise_mw / cfg.tx_power_mw


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one PASS/FAIL line per acceptance criterion, repeated in the terminal summary
ACCEPTANCE = []


def report(number: int, ok: bool, detail: str) -> None:
    line = f"CRITERION {number}: {'PASS' if ok else 'FAIL'}  {detail}"
    print(line)
    ACCEPTANCE.append(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
