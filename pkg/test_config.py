import argparse
import logging

import pytest

from config import Config, RunConfig, __version__, load_env_file
from logger import PACKAGE_LOGGER, ColoredFormatter, get_logger, setup_logging
from models import ParameterError


class TestConfig:
    def test_defaults_are_valid(self):
        assert Config().validate()

    def test_environment_override(self, monkeypatch):
        monkeypatch.setenv("FANOID_RESTARTS", "7")
        monkeypatch.setenv("FANOID_PROGRESS", "no")
        settings = Config()
        assert settings.restarts == 7
        assert settings.progress is False

    def test_invalid_settings_listed(self, monkeypatch):
        monkeypatch.setenv("FANOID_ACCEPTANCE_RATE", "1.5")
        monkeypatch.setenv("FANOID_FORMAT", "xml")
        settings = Config()
        assert not settings.validate()
        assert settings.get_invalid_settings() == ["acceptance_rate", "output_format"]

    def test_env_file_does_not_override(self, tmp_path, monkeypatch):
        env = tmp_path / ".env"
        env.write_text("# comment\nFANOID_TRIALS=3\nFANOID_SEED=9\n")
        monkeypatch.setenv("FANOID_SEED", "4")
        # registered so monkeypatch also undoes the value loaded below
        monkeypatch.setenv("FANOID_TRIALS", "1")
        monkeypatch.delenv("FANOID_TRIALS")
        load_env_file(str(env))
        settings = Config()
        assert (settings.trials, settings.seed) == (3, 4)


class TestRunConfig:
    def test_from_args_falls_back_to_defaults(self):
        args = argparse.Namespace(command="census", seed=None, q=7, format="json", budget=None)
        run_config = RunConfig.from_args(args)
        assert run_config.seed == Config().seed
        assert run_config.q == 7
        assert run_config.scalar_field == "rational"

    @pytest.mark.parametrize("overrides", [
        {"command": "plot"},
        {"format": "xml"},
        {"trials": 0},
        {"tolerance": 0.0},
        {"budget": 0},
    ])
    def test_rejects(self, overrides):
        settings = dict(command="dims")
        settings.update(overrides)
        with pytest.raises(ParameterError):
            RunConfig(**settings)

    def test_provenance(self):
        block = RunConfig(command="dims", seed=5).provenance(n=3, k=1)
        assert block == {"tool": "fano-identifiability", "version": __version__, "command": "dims",
                         "seed": 5, "parameters": {"n": 3, "k": 1}}


class TestLogging:
    def test_console_only(self):
        logger = setup_logging()
        assert logger.name == PACKAGE_LOGGER
        assert len(logger.handlers) == 1
        assert isinstance(logger.handlers[0].formatter, ColoredFormatter)
        assert logger.handlers[0].level == logging.INFO

    def test_root_logger_untouched(self):
        root = logging.getLogger()
        before = (root.level, list(root.handlers))
        setup_logging()
        assert (root.level, list(root.handlers)) == before
        assert get_logger("ssa").parent.name == PACKAGE_LOGGER

    def test_session_file(self, tmp_path):
        logger = setup_logging(str(tmp_path), verbose=True)
        get_logger("fano").debug("census started")
        for handler in logger.handlers:
            handler.flush()
        logs = list(tmp_path.glob("session_*.log"))
        assert len(logs) == 1
        assert "census started" in logs[0].read_text(encoding="utf-8")
        assert logger.handlers[0].level == logging.DEBUG
        setup_logging()

    def test_colour_stays_on_console(self):
        record = logging.LogRecord("x", logging.WARNING, __file__, 1, "careful", None, None)
        ColoredFormatter("%(levelname)s %(message)s").format(record)
        assert record.levelname == "WARNING"
