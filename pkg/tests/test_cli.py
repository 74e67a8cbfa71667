import csv
import io

import pytest
import yaml

from simcal.cli import main


@pytest.fixture(scope="module")
def campaign(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    manifest = root / "m.yaml"
    manifest.write_text(yaml.safe_dump({
        "experiments": [2], "backends": ["engine-a", "engine-b"], "repeats": 2,
        "output_dir": "out", "dataset": {"synthetic": {}},
        "de_config": {"population_factor": 0.5, "max_generations": 3, "seed": 1},
    }))
    assert main(["run", "--manifest", str(manifest)]) == 0
    return manifest, root / "out"


def rows(text):
    return list(csv.reader(io.StringIO(text)))


def test_improvement_report(campaign, capsys):
    _, out = campaign
    capsys.readouterr()
    main(["report", "improvement", "--campaign", str(out)])
    r = rows(capsys.readouterr().out)
    assert r[0] == ["experiment", "best_generic_backend", "best_generic", "best_tuned_backend", "best_tuned", "improvement"]
    assert r[1][0] == "2" and 0 <= float(r[1][5]) <= 1


def test_importance_report(campaign, tmp_path):
    _, out = campaign
    target = tmp_path / "imp.csv"
    main(["report", "importance", "--campaign", str(out), "--backend", "engine-b", "--experiment", "2", "--out", str(target)])
    r = rows(target.read_text())
    assert r[0] == ["parameter", "median", "std", "q1", "q3", "min", "max", "normalized_std"]
    assert len(r) == 1 + 22


def test_convergence_report(campaign, capsys):
    _, out = campaign
    capsys.readouterr()
    main(["report", "convergence", "--campaign", str(out), "--experiment", "2"])
    r = rows(capsys.readouterr().out)
    assert r[0] == ["generation", "backend", "mean_best_fitness"]
    assert {x[1] for x in r[1:]} == {"engine-a", "engine-b"}


def test_baseline(campaign, capsys):
    manifest, _ = campaign
    capsys.readouterr()
    main(["baseline", "--manifest", str(manifest)])
    r = rows(capsys.readouterr().out)
    assert r[0] == ["group", "experiment", "backend", "baseline_fitness"] and len(r) == 3


def test_resume_skips(campaign, capsys):
    manifest, _ = campaign
    capsys.readouterr()
    main(["run", "--manifest", str(manifest), "--resume"])
    assert capsys.readouterr().out.count("[skip]") == 4


def test_importance_needs_backend(campaign):
    _, out = campaign
    with pytest.raises(SystemExit):
        main(["report", "importance", "--campaign", str(out)])
