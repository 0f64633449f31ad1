import json

import pytest

from selfcorrect.cli import heldout_split, main
from selfcorrect.config import ConfigError, RunConfig
from selfcorrect.corruptor import read_pairs_jsonl
from selfcorrect.embedder import cache_read
from selfcorrect.hashing import splitmix64
from selfcorrect.toylang import write_toy_files


@pytest.fixture(scope="module")
def toy_files(tmp_path_factory):
    directory = tmp_path_factory.mktemp("toy")
    corpus_path, tables_path = write_toy_files(str(directory))
    return corpus_path, tables_path


def run_cli(*args):
    return main([str(a) for a in args])


class TestRunConfig:
    def test_defaults_complete(self):
        cfg = RunConfig()
        assert cfg.seed == 42
        assert cfg.alpha == 0.5
        assert cfg.clip_epsilon == 0.05
        assert cfg.candidates == 4
        assert cfg.ppo_epochs == 2
        assert len(cfg.prior) == 5

    def test_unknown_key_is_hard_error(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text('{"tua": 0.8}')
        with pytest.raises(ConfigError) as err:
            RunConfig.load(str(path))
        assert "tua" in str(err.value)

    def test_file_overrides_defaults_and_flags_override_file(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text('{"eta0": 0.125, "batch_size": 8}')
        cfg = RunConfig.load(str(path), overrides={"batch_size": 4})
        assert cfg.eta0 == 0.125
        assert cfg.batch_size == 4

    def test_invalid_json_reported(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text("{nope")
        with pytest.raises(ConfigError):
            RunConfig.load(str(path))

    def test_sub_config_validation_maps_to_config_error(self):
        cfg = RunConfig()
        cfg.clip_epsilon = 0.5
        with pytest.raises(ConfigError):
            cfg.trainer_config()
        cfg = RunConfig()
        cfg.prior = [1.0, 1.0, 0.0, 0.0, 0.0]
        with pytest.raises(ConfigError):
            cfg.operator_prior()

    def test_echo_round_trips(self, tmp_path):
        cfg = RunConfig()
        cfg.eta0 = 0.75
        path = tmp_path / "echo.json"
        cfg.write_echo(str(path))
        loaded = RunConfig.load(str(path))
        assert loaded.resolved() == cfg.resolved()


class TestHeldoutSplit:
    def test_split_is_stable_and_disjoint(self):
        train_idx, held_idx = heldout_split(1000)
        again_train, again_held = heldout_split(1000)
        assert train_idx == again_train and held_idx == again_held
        assert set(train_idx) | set(held_idx) == set(range(1000))
        assert not set(train_idx) & set(held_idx)
        # Roughly 10 percent held out.
        assert 0.05 <= len(held_idx) / 1000 <= 0.15

    def test_split_matches_hash_rule(self):
        _, held_idx = heldout_split(200)
        assert held_idx == [i for i in range(200) if splitmix64(i) % 10 == 0]


class TestCorruptCommand:
    def test_writes_pairs_and_stats(self, toy_files, tmp_path, capsys):
        corpus, tables = toy_files
        out = tmp_path / "run"
        code = run_cli(
            "corrupt", "--corpus", corpus, "--tables", tables,
            "--copies", 4, "--seed", 42, "--out", out,
        )
        assert code == 0
        stats = json.loads(capsys.readouterr().out)
        assert stats["generated"] == 800
        assert stats["accepted"] <= 800
        assert set(stats["corruption_rates"]) == {"hom", "glyph", "radical", "split", "symbol"}
        pairs = read_pairs_jsonl(str(out / "pairs.jsonl"))
        assert len(pairs) == stats["accepted"]
        assert (out / "config.json").exists()

    def test_filters_off_keeps_every_attempt(self, toy_files, tmp_path, capsys):
        corpus, tables = toy_files
        out = tmp_path / "nofilters"
        code = run_cli(
            "corrupt", "--corpus", corpus, "--tables", tables,
            "--copies", 4, "--seed", 1, "--out", out, "--no-filters",
        )
        assert code == 0
        stats = json.loads(capsys.readouterr().out)
        assert stats["accepted"] == 800
        assert len(read_pairs_jsonl(str(out / "pairs.jsonl"))) == 800

    def test_same_seed_is_byte_identical(self, toy_files, tmp_path, capsys):
        corpus, tables = toy_files
        outs = []
        for name in ("a", "b"):
            out = tmp_path / name
            assert run_cli(
                "corrupt", "--corpus", corpus, "--tables", tables,
                "--copies", 2, "--seed", 42, "--out", out,
            ) == 0
            capsys.readouterr()
            outs.append((out / "pairs.jsonl").read_bytes())
        assert outs[0] == outs[1]

    def test_missing_corpus_file_is_io_error(self, toy_files, tmp_path, capsys):
        _, tables = toy_files
        code = run_cli(
            "corrupt", "--corpus", tmp_path / "missing.txt", "--tables", tables,
            "--out", tmp_path / "x",
        )
        assert code == 2
        assert "i/o error" in capsys.readouterr().err

    def test_malformed_tables_named_with_line(self, toy_files, tmp_path, capsys):
        corpus, _ = toy_files
        bad = tmp_path / "bad.tsv"
        bad.write_text("hom\ta\tb\nnot a rule\n", encoding="utf-8")
        code = run_cli(
            "corrupt", "--corpus", corpus, "--tables", bad, "--out", tmp_path / "y",
        )
        assert code == 2
        assert ":2:" in capsys.readouterr().err

    def test_missing_required_keys_is_usage_error(self, tmp_path, capsys):
        code = run_cli("corrupt", "--out", tmp_path / "z")
        assert code == 1
        assert "config error" in capsys.readouterr().err


class TestTrainEvalCommands:
    @pytest.fixture(scope="class")
    def tiny_run(self, toy_files, tmp_path_factory):
        corpus, tables = toy_files
        base = tmp_path_factory.mktemp("train")
        data_dir = base / "data"
        assert run_cli(
            "corrupt", "--corpus", corpus, "--tables", tables,
            "--copies", 2, "--seed", 42, "--out", data_dir,
        ) == 0
        run_dir = base / "run"
        assert run_cli(
            "train", "--dataset", data_dir / "pairs.jsonl", "--tables", tables,
            "--seed", 42, "--out", run_dir,
            "--total-updates", 3, "--batch-size", 4, "--candidates", 2,
        ) == 0
        return tables, data_dir, run_dir

    def test_train_writes_artifacts(self, tiny_run, capsys):
        _, _, run_dir = tiny_run
        capsys.readouterr()
        assert (run_dir / "checkpoint.bin").exists()
        assert (run_dir / "eval.json").exists()
        assert (run_dir / "config.json").exists()
        assert (run_dir / "telemetry.json").exists()
        log_lines = (run_dir / "train_log.jsonl").read_text().splitlines()
        assert len(log_lines) == 3
        record = json.loads(log_lines[0])
        assert set(record) == {
            "t", "lr", "mean_reward", "grad_norm", "clip_fraction",
            "kl", "baseline_bias", "wall_ms",
        }

    def test_zero_updates_emits_init_checkpoint_and_empty_log(
        self, toy_files, tiny_run, tmp_path, capsys
    ):
        tables, data_dir, _ = tiny_run
        out = tmp_path / "zero"
        assert run_cli(
            "train", "--dataset", data_dir / "pairs.jsonl", "--tables", tables,
            "--seed", 42, "--out", out, "--total-updates", 0,
        ) == 0
        capsys.readouterr()
        assert (out / "checkpoint.bin").exists()
        assert (out / "train_log.jsonl").read_text() == ""

    def test_eval_prints_metrics(self, tiny_run, capsys):
        tables, data_dir, run_dir = tiny_run
        code = run_cli(
            "eval", "--checkpoint", run_dir / "checkpoint.bin",
            "--test", data_dir / "pairs.jsonl", "--tables", tables,
        )
        assert code == 0
        metrics = json.loads(capsys.readouterr().out)
        assert set(metrics) == {"precision", "recall", "f1", "exact_match"}

    def test_eval_empty_test_set(self, tiny_run, tmp_path, capsys):
        tables, _, run_dir = tiny_run
        empty = tmp_path / "empty.jsonl"
        empty.write_text("")
        code = run_cli(
            "eval", "--checkpoint", run_dir / "checkpoint.bin",
            "--test", empty, "--tables", tables,
        )
        assert code == 2
        assert "empty test set" in capsys.readouterr().err


class TestRewardScoreCommand:
    def write_groups(self, tmp_path):
        path = tmp_path / "groups.jsonl"
        rows = [
            {"ref": "abcd", "candidates": ["abcd", "abcx", "abcd"]},
            {"ref": "efgh", "candidates": ["efgh"]},
        ]
        path.write_text("\n".join(json.dumps(r) for r in rows) + "\n")
        return path

    def test_itemized_columns(self, tmp_path, capsys):
        path = self.write_groups(tmp_path)
        assert run_cli("reward-score", "--input", path) == 0
        records = [json.loads(l) for l in capsys.readouterr().out.splitlines()]
        assert len(records) == 4
        for rec in records:
            assert set(rec) == {"group", "k", "candidate", "r_pair", "r_cons", "reward"}
            assert rec["reward"] == pytest.approx(
                0.5 * rec["r_pair"] + 0.5 * rec["r_cons"]
            )

    def test_alpha_one_reproduces_pairwise_column(self, tmp_path, capsys):
        path = self.write_groups(tmp_path)
        assert run_cli("reward-score", "--input", path, "--alpha", 1.0) == 0
        for line in capsys.readouterr().out.splitlines():
            rec = json.loads(line)
            assert rec["reward"] == pytest.approx(rec["r_pair"])
            assert "r_cons" in rec

    def test_alpha_zero_reproduces_consensus_column(self, tmp_path, capsys):
        path = self.write_groups(tmp_path)
        assert run_cli("reward-score", "--input", path, "--alpha", 0.0) == 0
        for line in capsys.readouterr().out.splitlines():
            rec = json.loads(line)
            assert rec["reward"] == pytest.approx(rec["r_cons"])


class TestTheoryCommand:
    def test_default_suite_passes_and_writes_records(self, tmp_path, capsys):
        out = tmp_path / "theory.jsonl"
        code = run_cli("theory-check", "--seed", 42, "--out", out)
        assert code == 0
        lines = capsys.readouterr().out.splitlines()
        records = [json.loads(l) for l in lines]
        assert len(records) == 5
        assert all(r["pass"] for r in records)
        for rec in records:
            assert set(rec) >= {"check", "seed", "measured", "bound", "pass"}
        assert out.read_text().splitlines() == lines


class TestEncodeCacheCommand:
    def test_builds_cache_from_sentences(self, tmp_path, capsys):
        sentences = tmp_path / "sents.txt"
        sentences.write_text("abc\ndef\nabc\n", encoding="utf-8")
        out = tmp_path / "cache.bin"
        assert run_cli("encode-cache", "--sentences", sentences, "--out", out) == 0
        summary = json.loads(capsys.readouterr().out)
        cache = cache_read(str(out), expect_dim=256)
        assert summary["entries"] == len(cache) == 2
