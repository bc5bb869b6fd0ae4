"""Config parsing: defaults, validation, error aggregation, round-trip."""

import pytest

from gkdvlab.config import RunConfig, config_docs, parse_config, \
    serialize_config
from gkdvlab.errors import ConfigError, RangeError, UnknownKey


class TestDefaults:
    def test_minimal_config_applies_defaults(self):
        cfg = parse_config("[equation]\nq = 7\n")
        assert cfg.gamma == 0.0
        assert cfg.q == 7.0
        assert cfg.n == 1024
        assert cfg.length == 60.0
        assert cfg.kind == "evolve"
        assert cfg.gamma_list == ()

    def test_empty_text_is_all_defaults(self):
        assert parse_config("") == RunConfig()

    def test_every_key_documented(self):
        docs = config_docs()
        for key in ("equation.gamma", "grid.n", "integrator.dt",
                    "decomposition.b_max", "experiment.seed"):
            assert key in docs


class TestValidation:
    def test_q_below_five_rejected(self):
        with pytest.raises(RangeError, match="equation.q"):
            parse_config("[equation]\nq = 4\n")

    def test_non_power_of_two_grid_rejected(self):
        with pytest.raises(RangeError, match="power of two"):
            parse_config("[grid]\nn = 1000\n")

    def test_unknown_key_rejected(self):
        with pytest.raises(UnknownKey, match="equation.mass"):
            parse_config("[equation]\nmass = 1\n")

    def test_unknown_section_rejected(self):
        with pytest.raises(UnknownKey, match="turbo"):
            parse_config("[turbo]\nboost = 1\n")

    def test_bad_int_text_is_type_error(self):
        with pytest.raises(TypeError, match="grid.n"):
            parse_config("[grid]\nn = 12.5\n")

    def test_bad_float_text_is_type_error(self):
        with pytest.raises(TypeError, match="equation.gamma"):
            parse_config("[equation]\ngamma = tiny\n")

    def test_negative_gamma_rejected(self):
        with pytest.raises(RangeError, match="equation.gamma"):
            parse_config("[equation]\ngamma = -1e-5\n")

    def test_bad_kind_rejected(self):
        with pytest.raises(RangeError, match="experiment.kind"):
            parse_config("[experiment]\nkind = warp\n")

    def test_gamma_list_entries_checked(self):
        with pytest.raises(RangeError, match="gamma_list"):
            parse_config("[experiment]\ngamma_list = 1e-4, -1e-5\n")

    def test_all_errors_collected(self):
        bad = "[equation]\nq = 4\ngamma = -1\n[grid]\nn = 1000\n"
        with pytest.raises(ConfigError) as err:
            parse_config(bad)
        keys = {key for _kind, key, _msg in err.value.issues}
        assert keys == {"equation.q", "equation.gamma", "grid.n"}

    def test_mixed_error_kinds_collected(self):
        bad = "[grid]\nn = lots\n[equation]\nmass = 1\n"
        with pytest.raises(ConfigError) as err:
            parse_config(bad)
        kinds = {kind for kind, _key, _msg in err.value.issues}
        assert kinds == {"TypeError", "UnknownKey"}

    def test_syntax_error_reported(self):
        with pytest.raises(ConfigError):
            parse_config("q = 7\n")  # key before any section header


class TestRoundTrip:
    def test_serialize_parse_is_identity(self):
        cfg = RunConfig(gamma=1.37e-7, q=7.0, length=61.5, n=2048,
                        dt=3.1e-4, gamma_list=(1e-4, 1e-5, 1e-6),
                        cadence=0.0625, seed=42)
        assert parse_config(serialize_config(cfg)) == cfg

    def test_serialization_is_stable(self):
        text = serialize_config(RunConfig())
        assert serialize_config(parse_config(text)) == text

    def test_awkward_floats_survive(self):
        cfg = RunConfig(gamma=0.1 + 0.2, dt=1.0 / 3.0, cadence=2.0 ** -40)
        back = parse_config(serialize_config(cfg))
        assert back.gamma == cfg.gamma
        assert back.dt == cfg.dt
        assert back.cadence == cfg.cadence
