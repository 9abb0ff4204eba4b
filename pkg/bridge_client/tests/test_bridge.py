"""Bridge conformance: differential equality, wire contract, error paths."""

import json
import shutil
from pathlib import Path

import numpy as np
import pytest

from sautebridge import BridgeAdapter, BridgeProtocolError, bridge_serve, conformance_suite
from sautebridge.conformance import INFO_KEYS

from sautemdp.envs import PendulumEnv
from sautemdp.saute import ObjectiveMode, SauteConfig, SauteEnv

ENGINE = shutil.which("sautemdp")
CONFIG = Path(__file__).resolve().parents[2] / "configs" / "bridge_pendulum.json"

pytestmark = pytest.mark.skipif(ENGINE is None, reason="engine binary not on PATH")


def native_env() -> SauteEnv:
    cfg = SauteConfig(
        budget_d=30.0,
        gamma_l=1.0,
        reshape_n=200.0,
        normalize=True,
        mode=ObjectiveMode.MAXIMIZE_REWARD,
    )
    return SauteEnv(PendulumEnv(), cfg)


@pytest.fixture
def adapter():
    a = bridge_serve(ENGINE, str(CONFIG))
    yield a
    try:
        a.close()
    except BridgeProtocolError:
        pass


class TestAdapterBasics:
    def test_spec_reports_engine_version_and_augmented_dim(self, adapter):
        spec = adapter.spec()
        assert spec["observation_dim"] == 4  # cos, sin, thdot, z
        assert spec["budget_d"] == 30.0
        assert "engine_version" in spec

    def test_reset_twice_identical(self, adapter):
        assert adapter.reset(seed=0) == adapter.reset(seed=0)

    def test_reset_appends_unit_safety_state(self, adapter):
        obs = adapter.reset(seed=5)
        assert obs[-1] == 1.0

    def test_step_returns_gym_style_tuple(self, adapter):
        adapter.reset(seed=1)
        obs, cost, done, info = adapter.step([0.3])
        assert isinstance(obs, list) and len(obs) == 4
        assert isinstance(cost, float)
        assert done is False
        assert tuple(sorted(info)) == tuple(sorted(INFO_KEYS))

    def test_step_after_done_raises(self, adapter):
        adapter.reset(seed=2)
        done = False
        while not done:
            _, _, done, _ = adapter.step([0.0])
        with pytest.raises(BridgeProtocolError, match="after episode end"):
            adapter.step([0.0])

    def test_step_before_reset_raises(self, adapter):
        with pytest.raises(BridgeProtocolError, match="before reset"):
            adapter.step([0.0])


class TestDifferential:
    def test_thousand_step_differential_bit_exact(self, adapter):
        """Acceptance (bridge conformance): 1000 bridged steps match native
        engine rollouts bit-exactly; info field names character-exact."""
        result = conformance_suite(adapter, native_env(), total_steps=1000, seed=0)
        status = "PASS" if result.passed else "FAIL"
        print(f"[ACCEPTANCE] criterion 9 (bridge conformance): {status}")
        assert result.passed, result.summary()
        assert result.checks["differential equality over 1000 steps"]
        assert result.checks["info field names character-exact"]

    def test_conformance_detects_tampered_info_key(self, adapter):
        class TamperingAdapter:
            def __init__(self, inner):
                self._inner = inner

            def spec(self):
                return self._inner.spec()

            def reset(self, seed):
                return self._inner.reset(seed)

            def step(self, action):
                obs, cost, done, info = self._inner.step(action)
                info = dict(info)
                info["trueCost"] = info.pop("true_cost")
                return obs, cost, done, info

        result = conformance_suite(TamperingAdapter(adapter), native_env(), total_steps=10, seed=0)
        assert not result.passed
        assert not result.checks["info field names character-exact"]

    def test_conformance_detects_version_mismatch(self, adapter):
        class WrongVersionAdapter:
            def __init__(self, inner):
                self._inner = inner

            def spec(self):
                spec = dict(self._inner.spec())
                spec["engine_version"] = "0.0.0-other"
                return spec

            def reset(self, seed):
                return self._inner.reset(seed)

            def step(self, action):
                return self._inner.step(action)

        result = conformance_suite(WrongVersionAdapter(adapter), native_env(), total_steps=5, seed=0)
        assert not result.checks["engine version match"]
        assert any("0.0.0-other" in f for f in result.failures)


class TestProtocolRobustness:
    def test_malformed_engine_response_raises_with_raw_line(self, tmp_path):
        fake_engine = tmp_path / "fake_engine.py"
        fake_engine.write_text(
            "import sys\n"
            "sys.stdin.readline()\n"
            "print('this is not json', flush=True)\n"
        )
        adapter = BridgeAdapter(["python3", str(fake_engine)])
        with pytest.raises(BridgeProtocolError, match="not json"):
            adapter.spec()

    def test_child_crash_surfaces_exit(self, tmp_path):
        fake_engine = tmp_path / "dead_engine.py"
        fake_engine.write_text("import sys; sys.exit(3)\n")
        adapter = BridgeAdapter(["python3", str(fake_engine)])
        with pytest.raises(BridgeProtocolError, match="closed the stream"):
            adapter.spec()

    def test_wire_floats_round_trip_exactly(self, adapter):
        # a float that exercises the shortest-round-trip formatter
        adapter.reset(seed=9)
        _, cost, _, info = adapter.step([0.12345678901234567])
        assert cost == float(json.loads(json.dumps(cost)))
        assert info["next_safe_state"] == float(json.loads(json.dumps(info["next_safe_state"])))
