"""Tests for weylgauge.cli: argument parsing, logging setup, ColorFormatter and exit codes."""

import json
import logging
import sys
from logging.handlers import RotatingFileHandler
from unittest.mock import patch

import pytest

from weylgauge import cli, experiments
from weylgauge.cli import ColorFormatter, build_parser, run, setup_logging
from weylgauge.errors import ConvergenceError


# ---------------------------------------------------------------------------
# build_parser()
# ---------------------------------------------------------------------------


class TestParseArgs:
    def test_no_args_has_no_experiment(self):
        args = build_parser().parse_args([])
        assert args.experiment is None
        assert args.debug is False

    @pytest.mark.parametrize("flag", ["--debug", "-d"])
    def test_debug_flag_sets_debug_true(self, flag: str):
        args = build_parser().parse_args([flag, "moments"])
        assert args.debug is True

    @pytest.mark.parametrize("name", experiments.EXPERIMENTS)
    def test_every_experiment_is_a_subcommand(self, name: str):
        args = build_parser().parse_args([name, "--dry-run"])
        assert args.experiment == name
        assert args.dry_run is True

    def test_subcommand_flags(self):
        args = build_parser().parse_args(
            ["double-slit", "--config", "c.json", "--out", "o", "--seed", "9", "--workers", "2"]
        )
        assert (args.config, args.out, args.seed, args.workers) == ("c.json", "o", 9, 2)

    def test_run_flags_before_the_experiment(self):
        args = build_parser().parse_args(["--seed", "7", "--dry-run", "--out", "o", "double-slit"])
        assert (args.seed, args.dry_run, args.out, args.experiment) == (7, True, "o", "double-slit")

    def test_run_flags_after_the_experiment_win(self):
        args = build_parser().parse_args(["--seed", "7", "double-slit", "--seed", "8"])
        assert args.seed == 8

    def test_run_flags_default_when_absent(self):
        args = build_parser().parse_args(["moments"])
        assert (args.config, args.out, args.seed, args.workers, args.dry_run) == (None, None, None, None, False)

    def test_unknown_experiment_exits(self):
        with pytest.raises(SystemExit):
            build_parser().parse_args(["triple-slit"])

    def test_version_flag_exits(self):
        with pytest.raises(SystemExit):
            build_parser().parse_args(["--version"])


# ---------------------------------------------------------------------------
# setup_logging()
#
# Strategy: patch logging.basicConfig to intercept the handlers list it
# receives. This avoids fighting pytest's own LogCaptureHandler (which
# pre-exists on the root logger and would make basicConfig a no-op).
# ---------------------------------------------------------------------------


def _capture_basicconfig(tmp_path, debug: bool) -> list[logging.Handler]:
    captured: list[logging.Handler] = []

    def fake_basicconfig(**kwargs):
        captured.extend(kwargs.get("handlers", []))

    with patch("weylgauge.cli.constants.CONFIG_DIR", str(tmp_path)), \
         patch("logging.basicConfig", side_effect=fake_basicconfig):
        setup_logging(debug=debug)

    return captured


class TestSetupLogging:
    def test_default_mode_sends_one_stream_handler(self, tmp_path):
        handlers = _capture_basicconfig(tmp_path, debug=False)
        stream = [h for h in handlers if type(h).__name__ == "StreamHandler"]
        assert len(stream) == 1
        assert stream[0].level == logging.INFO

    def test_debug_mode_stream_handler_level_is_debug(self, tmp_path):
        handlers = _capture_basicconfig(tmp_path, debug=True)
        stream = [h for h in handlers if type(h).__name__ == "StreamHandler"]
        assert stream[0].level == logging.DEBUG

    def test_no_file_handler_in_default_mode(self, tmp_path):
        handlers = _capture_basicconfig(tmp_path, debug=False)
        assert not [h for h in handlers if isinstance(h, RotatingFileHandler)]

    def test_file_handler_in_debug_mode_uses_config_dir(self, tmp_path):
        handlers = _capture_basicconfig(tmp_path / "fresh", debug=True)
        file_handlers = [h for h in handlers if isinstance(h, RotatingFileHandler)]
        assert len(file_handlers) == 1
        assert str(tmp_path / "fresh") in file_handlers[0].baseFilename
        assert file_handlers[0].level == logging.DEBUG
        assert not isinstance(file_handlers[0].formatter, ColorFormatter)
        file_handlers[0].close()

    def test_stream_handler_formatter_is_color_formatter(self, tmp_path):
        handlers = _capture_basicconfig(tmp_path, debug=False)
        assert isinstance(handlers[0].formatter, ColorFormatter)

    def test_stream_handler_writes_to_stderr(self, tmp_path):
        handlers = _capture_basicconfig(tmp_path, debug=False)
        assert handlers[0].stream is sys.stderr

    def test_basicconfig_receives_debug_root_level(self, tmp_path):
        received_level: list[int] = []

        def fake_basicconfig(**kwargs):
            received_level.append(kwargs.get("level", -1))

        with patch("weylgauge.cli.constants.CONFIG_DIR", str(tmp_path)), \
             patch("logging.basicConfig", side_effect=fake_basicconfig):
            setup_logging(debug=False)

        assert received_level == [logging.DEBUG]


# ---------------------------------------------------------------------------
# ColorFormatter
# ---------------------------------------------------------------------------


class TestColorFormatter:
    _FMT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"

    def _make_record(self, level: int, message: str = "test") -> logging.LogRecord:
        return logging.LogRecord(
            name="weylgauge.test", level=level, pathname="", lineno=0, msg=message, args=(), exc_info=None
        )

    @pytest.mark.parametrize("level,color_fragment", [
        (logging.DEBUG, "\033[1;36m"),
        (logging.INFO, "\033[1;32m"),
        (logging.WARNING, "\033[1;33m"),
        (logging.ERROR, "\033[1;31m"),
        (logging.CRITICAL, "\033[1;41m"),
    ])
    def test_injects_ansi_color_for_each_level(self, level: int, color_fragment: str):
        formatted = ColorFormatter(self._FMT).format(self._make_record(level))
        assert color_fragment in formatted

    def test_name_is_colorized_and_message_kept(self):
        formatted = ColorFormatter(self._FMT).format(self._make_record(logging.INFO, "curvature check"))
        assert "\033[1;34mweylgauge.test" in formatted
        assert "curvature check" in formatted

    def test_record_is_left_plain_for_other_handlers(self):
        record = self._make_record(logging.WARNING, "slope low")
        ColorFormatter(self._FMT).format(record)
        plain = logging.Formatter("%(name)s - %(levelname)s - %(message)s").format(record)
        assert plain == "weylgauge.test - WARNING - slope low"
        assert "\033" not in plain


# ---------------------------------------------------------------------------
# run(): config resolution, artefacts and exit codes
# ---------------------------------------------------------------------------


def _run(tmp_path, *argv: str) -> int:
    settings = str(tmp_path / "absent-settings.ini")
    with patch("logging.basicConfig"):
        return run(["--settings", settings, *argv])


def _write_config(tmp_path, experiment: str, parameters: dict, **extra) -> str:
    path = tmp_path / f"{experiment}.json"
    body = {"schema_version": 1, "experiment": experiment, "parameters": parameters, **extra}
    path.write_text(json.dumps(body))
    return str(path)


class TestRun:
    def test_dry_run_stdout_is_json_with_live_handlers(self, tmp_path, capsys):
        root = logging.getLogger()
        installed: list[logging.Handler] = []
        previous_level = root.level

        def real_basicconfig(**kwargs):
            installed.extend(kwargs["handlers"])
            for handler in installed:
                root.addHandler(handler)
            root.setLevel(kwargs["level"])

        try:
            with patch("logging.basicConfig", side_effect=real_basicconfig):
                status = run(["--settings", str(tmp_path / "absent.ini"), "moments", "--dry-run"])
        finally:
            for handler in installed:
                root.removeHandler(handler)
                handler.close()
            root.setLevel(previous_level)

        captured = capsys.readouterr()
        assert status == cli.EXIT_OK
        assert json.loads(captured.out)["experiment"] == "moments"
        assert "Logging initialized" in captured.err
    def test_dry_run_prints_sorted_resolved_config(self, tmp_path, capsys):
        status = _run(tmp_path, "moments", "--dry-run", "--out", str(tmp_path / "o"))
        assert status == cli.EXIT_OK
        printed = json.loads(capsys.readouterr().out)
        assert printed["experiment"] == "moments"
        assert printed["output"]["directory"] == str(tmp_path / "o")
        assert printed["parameters"]["etas"] == [0.1, 0.01, 0.001]
        assert not (tmp_path / "o").exists()

    def test_seed_flag_overrides_config(self, tmp_path, capsys):
        config = _write_config(tmp_path, "double-slit", {"seed": 1})
        _run(tmp_path, "double-slit", "--config", config, "--seed", "77", "--dry-run")
        assert json.loads(capsys.readouterr().out)["parameters"]["seed"] == 77

    def test_zero_slit_separation_exits_with_config_error(self, tmp_path, caplog):
        config = _write_config(tmp_path, "double-slit", {"d_s": 0})
        status = _run(tmp_path, "double-slit", "--config", config)
        assert status == cli.EXIT_CONFIG
        assert "parameters.d_s" in caplog.text

    def test_unknown_parameter_is_rejected(self, tmp_path, caplog):
        config = _write_config(tmp_path, "moments", {"etas": [0.1, 0.01], "eta_zero": True})
        assert _run(tmp_path, "moments", "--config", config) == cli.EXIT_CONFIG
        assert "eta_zero" in caplog.text

    def test_wrong_schema_version_is_rejected(self, tmp_path, caplog):
        path = tmp_path / "old.json"
        path.write_text(json.dumps({"schema_version": 2, "experiment": "moments"}))
        assert _run(tmp_path, "moments", "--config", str(path)) == cli.EXIT_CONFIG
        assert "schema_version" in caplog.text

    def test_config_for_other_experiment_is_rejected(self, tmp_path, caplog):
        config = _write_config(tmp_path, "moments", {})
        assert _run(tmp_path, "hj-order", "--config", config) == cli.EXIT_CONFIG
        assert "experiment" in caplog.text

    def test_malformed_json_is_a_config_error(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text("{ not json")
        assert _run(tmp_path, "moments", "--config", str(path)) == cli.EXIT_CONFIG

    def test_passing_run_writes_summary(self, tmp_path, capsys):
        config = _write_config(tmp_path, "ab-sweep", {"samples": 8})
        out = tmp_path / "ab"
        status = _run(tmp_path, "ab-sweep", "--config", config, "--out", str(out))
        assert status == cli.EXIT_OK
        summary = json.loads((out / "summary.json").read_text())
        assert summary["experiment"] == "ab-sweep"
        assert all(c["pass"] for c in summary["checks"])
        assert (out / "ab_sweep.csv").exists()
        lines = capsys.readouterr().out.splitlines()
        assert any(line.startswith("PASS shift_rate") for line in lines)

    def test_failed_check_exits_3(self, tmp_path, capsys):
        config = _write_config(tmp_path, "geometry-check", {"metrics": ["sphere:2"], "points": 5, "tolerance": 1e-300})
        status = _run(tmp_path, "geometry-check", "--config", config, "--out", str(tmp_path / "g"))
        assert status == cli.EXIT_CHECK_FAILED
        assert "FAIL" in capsys.readouterr().out

    def test_convergence_failure_exits_2(self, tmp_path):
        def failing(params, writer):
            raise ConvergenceError("Newton stalled", residual=1.0, iterations=3)

        with patch.dict(experiments.RUNNERS, {"extremal": failing}):
            status = _run(tmp_path, "extremal", "--out", str(tmp_path / "e"))
        assert status == cli.EXIT_NUMERICAL

    def test_init_settings_without_experiment_writes_file(self, tmp_path):
        settings = tmp_path / "conf" / "settings.ini"
        with patch("logging.basicConfig"):
            status = run(["--settings", str(settings), "--init-settings"])
        assert status == cli.EXIT_OK
        assert "[Propagator]" in settings.read_text()

    def test_missing_experiment_is_usage_error(self, tmp_path):
        assert _run(tmp_path) == cli.EXIT_CONFIG


class TestMain:
    def test_unexpected_exception_exits_1(self):
        with patch("weylgauge.cli.run", side_effect=RuntimeError("boom")):
            with pytest.raises(SystemExit) as exc:
                cli.main()
        assert exc.value.code == 1

    def test_status_is_passed_to_exit(self):
        with patch("weylgauge.cli.run", return_value=3):
            with pytest.raises(SystemExit) as exc:
                cli.main()
        assert exc.value.code == 3
