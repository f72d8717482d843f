"""Every primary acceptance criterion, one pass/fail line each."""

import pytest

from thinobs.acceptance import CRITERIA, run_acceptance, select
from thinobs.cli import main


@pytest.mark.parametrize("criterion", CRITERIA, ids=[c.id for c in CRITERIA])
def test_criterion(criterion, capsys):
    res = criterion()
    with capsys.disabled():
        print("\n" + res.line())
    assert res.passed, res.line()


def test_select_by_tag_and_id():
    assert [c.id for c in select("frequency")] == ["AC2", "AC5", "AC7", "AC10"]
    assert [c.id for c in select("AC3,AC9")] == ["AC3", "AC9"]
    assert len(select(None)) == len(CRITERIA) == 10
    with pytest.raises(ValueError, match="matches no criterion"):
        select("nonsense")


def test_accept_subcommand(capsys):
    assert main(["accept", "--only", "oracle"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0].startswith("PASS AC1") and out[1].startswith("PASS AC2")
    assert out[-1] == "2/2 criteria passed"
    assert main(["accept", "--only", "bogus"]) == 2


def test_run_acceptance_collects_lines():
    lines = []
    assert run_acceptance("AC3", echo=lines.append) == 0
    assert lines[0].startswith("PASS AC3") and lines[-1].splitlines()[-1] == "1/1 criteria passed"
