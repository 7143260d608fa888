import json

import numpy as np
from click.testing import CliRunner

from vmfe_extractor import read_vmfe
from vmfe_extractor.cli import main


def test_extract_and_verify(image_folder, tmp_path):
    folder, counts = image_folder
    out = tmp_path / "emb.vmfe"
    runner = CliRunner()
    result = runner.invoke(main, ["--model", "stub:24", "--input", str(folder),
                                  "--output", str(out), "--batch-size", "4"])
    assert result.exit_code == 0, result.output
    assert f"{sum(counts.values())} rows" in result.output

    result = runner.invoke(main, ["--verify", str(out)])
    assert result.exit_code == 0, result.output
    assert "d=24" in result.output and "C=3" in result.output
    assert "row norms" in result.output


def test_verify_rejects_truncated(image_folder, tmp_path):
    folder, _ = image_folder
    out = tmp_path / "emb.vmfe"
    runner = CliRunner()
    runner.invoke(main, ["--model", "stub:8", "--input", str(folder),
                         "--output", str(out)])
    out.write_bytes(out.read_bytes()[:-9])
    result = runner.invoke(main, ["--verify", str(out)])
    assert result.exit_code == 1
    assert "expected" in result.output


def test_missing_flags_usage_error(tmp_path):
    runner = CliRunner()
    result = runner.invoke(main, ["--model", "stub:8"])
    assert result.exit_code == 2
    assert "--input" in result.output


def test_unknown_checkpoint_fails_cleanly(image_folder, tmp_path):
    folder, _ = image_folder
    runner = CliRunner()
    result = runner.invoke(main, ["--model", "definitely/not-a-real-checkpoint",
                                  "--input", str(folder),
                                  "--output", str(tmp_path / "o.vmfe")])
    assert result.exit_code == 1
    assert "failed to load checkpoint" in result.output
