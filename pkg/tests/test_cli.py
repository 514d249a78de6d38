import hashlib
import json

import pytest

from keqi.cli import RunConfig, config_template, dispatch, load_config, read_labels
from keqi.corpus import load_articles
from keqi.entity_graph import SO, load_graph
from keqi.embed_pretrain import load_embeddings
from keqi.quality_model import QualityModel

SMALL = ["--n-train", "60", "--n-valid", "20", "--n-test", "20", "--n-unlabeled", "80"]
FAST = {"dim": 8, "sgns_epochs": 1, "walks_per_node": 2, "epochs": 2, "lr": 0.003}


def digest(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert dispatch(["synth", "--out", str(root / "data"), "--seed", "1", *SMALL]) == 0
    (root / "fast.json").write_text(json.dumps(FAST))
    return root


def run(*argv):
    return dispatch([str(a) for a in argv])


class TestErrors:
    def test_unknown_subcommand(self, capsys):
        assert run("frobnicate") != 0
        err = capsys.readouterr().err
        assert "usage" in err and "frobnicate" in err

    def test_missing_required_flag(self, capsys):
        assert run("build-graph", "--articles", "a.jsonl") != 0
        assert "--pages" in capsys.readouterr().err

    def test_malformed_input(self, tmp_path, capsys):
        bad = tmp_path / "bad.jsonl"
        bad.write_text('{"id": "a", "title": "t"}\n')
        assert run("build-graph", "--articles", bad, "--pages", bad, "--out", tmp_path / "g.txt") == 1
        err = capsys.readouterr().err
        assert "line 1" in err and "body" in err

    def test_unknown_config_key(self, tmp_path, capsys):
        cfg = tmp_path / "c.json"
        cfg.write_text('{"learning_rate": 0.1}')
        assert run("synth", "--config", cfg, "--out", tmp_path) == 1
        assert "learning_rate" in capsys.readouterr().err

    def test_pretrained_needs_embeddings(self, corpus, tmp_path, capsys):
        d = corpus / "data"
        code = run("train", "--train", d / "train.jsonl", "--valid", d / "valid.jsonl", "--pages", d / "pages.jsonl",
                   "--node-init", "pretrained", "--out", tmp_path / "m.npz")
        assert code == 1
        assert "--embeddings" in capsys.readouterr().err


class TestConfig:
    def test_flags_override_file(self, tmp_path):
        from keqi.cli import build_parser, resolve_config

        cfg = tmp_path / "c.json"
        cfg.write_text('{"epochs": 7, "lr": 1}')
        args = build_parser().parse_args(["train", "--config", str(cfg), "--lr", "0.5", "--train", "a", "--valid",
                                          "b", "--pages", "c", "--out", "d"])
        rc = resolve_config(args)
        assert rc.epochs == 7 and rc.lr == 0.5 and rc.batch_size == 16

    def test_type_checked(self, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text('{"epochs": "five"}')
        with pytest.raises(ValueError, match="epochs"):
            load_config(cfg)

    def test_template_covers_every_key(self):
        assert set(json.loads(config_template())) == set(vars(RunConfig()))

    def test_documented_defaults(self):
        rc = RunConfig()
        assert (rc.alpha, rc.walk_length, rc.gcn_layers, rc.epochs, rc.batch_size, rc.lr, rc.dropout) == (
            0.8, 10, 3, 5, 16, 2e-4, 0.5)


class TestPipeline:
    def test_synth_is_seeded(self, corpus, tmp_path):
        assert run("synth", "--out", tmp_path, "--seed", "1", *SMALL) == 0
        for name in ("train", "valid", "test", "unlabeled", "pages"):
            assert digest(tmp_path / f"{name}.jsonl") == digest(corpus / "data" / f"{name}.jsonl")

    def test_build_graph_second_order(self, corpus, tmp_path, capsys):
        d = corpus / "data"
        before = digest(d / "unlabeled.jsonl")
        out = tmp_path / "g.txt"
        assert run("build-graph", "--articles", d / "unlabeled.jsonl", "--pages", d / "pages.jsonl", "--out", out,
                   "--second-order") == 0
        g = load_graph(out)
        assert any(e.order == SO for e in g.edges)
        assert digest(d / "unlabeled.jsonl") == before
        assert "nodes" in capsys.readouterr().out

    def test_single_article_graph(self, corpus, tmp_path):
        d = corpus / "data"
        art = load_articles(d / "train.jsonl")[0]
        out = tmp_path / "a.txt"
        assert run("build-graph", "--articles", d / "train.jsonl", "--pages", d / "pages.jsonl", "--out", out,
                   "--article-id", art.id) == 0
        assert set(load_graph(out).nodes) == set(art.entities)

    def test_label_fit_and_apply(self, corpus, tmp_path, capsys):
        d = corpus / "data"
        tree = tmp_path / "tree.txt"
        assert run("label", "fit", "--articles", d / "train.jsonl", "--tree-out", tree, "--holdout", "10") == 0
        out = capsys.readouterr().out
        assert "held-out accuracy" in out and "novelty" in out
        labeled = tmp_path / "lab.jsonl"
        assert run("label", "apply", "--tree", tree, "--articles", d / "unlabeled.jsonl", "--out", labeled) == 0
        assert all(a.label in (0, 1) for a in load_articles(labeled))

    def test_pretrain_train_evaluate(self, corpus, tmp_path, capsys):
        d = corpus / "data"
        cfg = corpus / "fast.json"
        g = tmp_path / "g.txt"
        run("build-graph", "--articles", d / "unlabeled.jsonl", "--pages", d / "pages.jsonl", "--out", g,
            "--second-order")
        e1, e2 = tmp_path / "e1.txt", tmp_path / "e2.txt"
        assert run("pretrain", "--config", cfg, "--graph", g, "--out", e1, "--seed", "3") == 0
        assert run("pretrain", "--config", cfg, "--graph", g, "--out", e2, "--seed", "3") == 0
        assert digest(e1) == digest(e2)
        assert load_embeddings(e1).dim == 8

        ckpt = tmp_path / "m.npz"
        common = ["--config", cfg, "--train", d / "train.jsonl", "--valid", d / "valid.jsonl",
                  "--pages", d / "pages.jsonl", "--embeddings", e1, "--node-init", "pretrained"]
        assert run("train", *common, "--out", ckpt) == 0
        assert QualityModel.load(ckpt).cfg.node_init == "pretrained"
        manifest = json.loads((tmp_path / "m.manifest.json").read_text())
        assert manifest["config"]["lr"] == 0.003
        assert manifest["checkpoint"].endswith("m.npz")
        log = [json.loads(x) for x in (tmp_path / "m.metrics.jsonl").read_text().splitlines()]
        assert [r["epoch"] for r in log] == [1, 2]
        ckpt2 = tmp_path / "m2.npz"
        assert run("train", *common, "--out", ckpt2) == 0
        assert digest(ckpt) == digest(ckpt2)

        capsys.readouterr()
        pred = tmp_path / "pred.tsv"
        assert run("evaluate", "--checkpoint", ckpt, "--articles", d / "test.jsonl", "--pages", d / "pages.jsonl",
                   "--pred-out", pred) == 0
        first = capsys.readouterr().out
        assert "F1" in first
        assert len(read_labels(pred)) == 20
        assert run("evaluate", "--pred", pred, "--gold", d / "test.jsonl") == 0
        assert capsys.readouterr().out == first

    def test_evaluate_label_files(self, tmp_path, capsys):
        (tmp_path / "p.tsv").write_text("a\t1\nb\t1\nc\t0\nd\t0\n")
        (tmp_path / "g.tsv").write_text("a\t1\nb\t0\nc\t1\nd\t0\n")
        assert run("evaluate", "--pred", tmp_path / "p.tsv", "--gold", tmp_path / "g.tsv") == 0
        assert "0.500" in capsys.readouterr().out

    def test_evaluate_id_mismatch(self, tmp_path, capsys):
        (tmp_path / "p.tsv").write_text("a\t1\n")
        (tmp_path / "g.tsv").write_text("b\t1\n")
        assert run("evaluate", "--pred", tmp_path / "p.tsv", "--gold", tmp_path / "g.tsv") == 1
        assert "differ" in capsys.readouterr().err

    def test_ablate(self, corpus, tmp_path, capsys):
        d = corpus / "data"
        g, e = tmp_path / "g.txt", tmp_path / "e.txt"
        run("build-graph", "--articles", d / "unlabeled.jsonl", "--pages", d / "pages.jsonl", "--out", g,
            "--second-order")
        run("pretrain", "--config", corpus / "fast.json", "--graph", g, "--out", e)
        out = tmp_path / "abl"
        assert run("ablate", "--config", corpus / "fast.json", "--train", d / "train.jsonl", "--valid",
                   d / "valid.jsonl", "--test", d / "test.jsonl", "--pages", d / "pages.jsonl", "--embeddings", e,
                   "--out-dir", out, "--epochs", "1", "--repeats", "2") == 0
        rows = [json.loads(x) for x in (out / "metrics.jsonl").read_text().splitlines()]
        assert len(rows) == 8
        assert {r["variant"] for r in rows} == {"random+gate", "pretrained+gate", "random+concat",
                                               "pretrained+concat"}
        assert json.loads((out / "manifest.json").read_text())["repeats"] == 2
        assert "pretrained+concat (test)" in capsys.readouterr().out


class TestConfigCommand:
    def test_prints_effective_settings(self, tmp_path, capsys):
        cfg = tmp_path / "c.json"
        cfg.write_text('{"epochs": 7}')
        assert run("config", "--config", cfg, "--lr", "0.003") == 0
        shown = json.loads(capsys.readouterr().out)
        assert shown["epochs"] == 7 and shown["lr"] == 0.003
        assert set(shown) == set(vars(RunConfig()))
