"""Command-line entry point, run against the example corpus."""

from pathlib import Path

import pytest
import yaml

from goalsynth.cli import create_parser, main
from goalsynth.config import Config
from goalsynth.parser import parse_games

EXAMPLE_DIR = Path(__file__).resolve().parents[1] / "example"

GAMES = str(EXAMPLE_DIR / "games")
THROWING = str(EXAMPLE_DIR / "games" / "throwing.pddl")
TRACES = str(EXAMPLE_DIR / "traces")


@pytest.fixture(autouse=True)
def clean_environment(monkeypatch):
    for names in Config.ENV_MAPPINGS.values():
        for name in names:
            monkeypatch.delenv(name, raising=False)


class TestParser:

    def test_global_flags_after_the_command(self):
        args = create_parser().parse_args(["sample", "--seed", "3", "--profile", "desk"])
        assert args.command == "sample"
        assert args.seed == 3
        assert args.profiles == ["desk"]

    def test_no_command(self):
        assert main([]) == 1

    def test_missing_corpus(self, tmp_path):
        assert main(["sample", "-q", "--outdir", str(tmp_path)]) == 1

    def test_unknown_profile(self):
        assert main(["sample", "-q", "--corpus", GAMES, "--profile", "laptop"]) == 1


class TestSample:

    def _sample(self, out, seed):
        return main(["sample", "-q", "--corpus", GAMES, "--n", "3", "--seed", str(seed),
                     "--out", str(out)])

    def test_seeded_samples_are_identical(self, tmp_path):
        assert self._sample(tmp_path / "a.pddl", 7) == 0
        assert self._sample(tmp_path / "b.pddl", 7) == 0
        a = (tmp_path / "a.pddl").read_text(encoding="utf-8")
        assert a == (tmp_path / "b.pddl").read_text(encoding="utf-8")
        assert a.startswith("; goal-synth ")
        assert "seed=7" in a.splitlines()[0]
        assert [g.name for g in parse_games(a)] == ["sample-0", "sample-1", "sample-2"]

    def test_zero_samples(self, tmp_path):
        assert main(["sample", "-q", "--corpus", GAMES, "--n", "0",
                     "--out", str(tmp_path / "x.pddl")]) == 1


class TestDescribeAndReplay:

    def test_describe(self, capsys):
        assert main(["describe", "-q", "--game", THROWING]) == 0
        out = capsys.readouterr().out
        assert "== bin-throws ==" in out
        assert "== bed-throws ==" in out
        assert "This preference is satisfied when:" in out

    def test_replay_report(self, tmp_path):
        out = tmp_path / "replay.yml"
        assert main(["replay", "-q", "--game", THROWING, "--traces", TRACES,
                     "--out", str(out)]) == 0
        reports = list(yaml.safe_load_all(out.read_text(encoding="utf-8")))
        assert len(reports) == 4
        first = next(r for r in reports
                     if r["game"] == "bin-throws" and r["trace"] == "two-throws")
        assert first["total"] == 1.0

    def test_log_file(self, tmp_path):
        log = tmp_path / "logs" / "run.log"
        assert main(["replay", "--game", THROWING, "--traces", TRACES,
                     "--out", str(tmp_path / "replay.yml"), "--log-file", str(log)]) == 0
        assert "Wrote 4 replay reports" in log.read_text(encoding="utf-8")

    def test_replay_needs_traces(self):
        assert main(["replay", "-q", "--game", THROWING]) == 1


class TestCorpusTables:

    def test_corruptions_and_manifest(self, tmp_path):
        assert main(["corrupt", "-q", "--corpus", GAMES, "--n", "2", "--seed", "1",
                     "--outdir", str(tmp_path)]) == 0
        games = parse_games((tmp_path / "corruptions.pddl").read_text(encoding="utf-8"))
        assert len(games) == 8
        manifest = yaml.safe_load((tmp_path / "manifest.yml").read_text(encoding="utf-8"))
        assert manifest["corruptions.tsv"]["seed"] == 1

    def test_features_table(self, tmp_path):
        assert main(["features", "-q", "--corpus", GAMES, "--traces", TRACES,
                     "--outdir", str(tmp_path)]) == 0
        lines = (tmp_path / "features.tsv").read_text(encoding="utf-8").splitlines()
        assert len(lines) == 1 + 4


@pytest.mark.slow
class TestTrainAndScore:

    def test_train_then_score(self, tmp_path, capsys):
        model = str(tmp_path / "model.yml")
        common = ["-q", "--corpus", GAMES, "--traces", TRACES, "--profile", "desk",
                  "--model", model, "--outdir", str(tmp_path)]
        assert main(["train", *common]) == 0
        saved = yaml.safe_load((tmp_path / "model.yml").read_text(encoding="utf-8"))
        assert saved["header"]["profiles"] == ["desk"]
        capsys.readouterr()

        assert main(["score", *common, "--game", THROWING]) == 0
        lines = capsys.readouterr().out.strip().splitlines()
        assert [line.split("\t")[0] for line in lines] == ["bin-throws", "bed-throws"]
        for line in lines:
            float(line.split("\t")[1])
