import json

import pytest

from revmatch.cli import main
from revmatch.config import RunConfig
from revmatch.corpus import load_corpus, load_reviewers
from revmatch.encoder import EncoderWeights
from revmatch.matching import ChainConfig, read_rankings
from revmatch.model import FactorModel
from revmatch.pipeline import rank_submissions
from revmatch.store import load_embeddings
from revmatch.tokenizer import Vocabulary

TINY = """\
synthetic.num_papers = 240
synthetic.num_queries = 40
synthetic.num_authors = 50
synthetic.num_submissions = 4
train.epochs = 1
train.max_samples_per_factor = 16
encoder.hidden_dim = 8
encoder.num_heads = 2
encoder.ffn_dim = 16
encoder.max_paper_len = 48
"""


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    (root / "tiny.cfg").write_text(TINY)
    args = ["--config", str(root / "tiny.cfg"), "--workdir", str(root / "w")]
    assert main(["build-corpus", *args]) == 0
    assert main(["train", *args]) == 0
    assert main(["train", "--plain", *args]) == 0
    return root, args


def test_no_command_is_usage_error(capsys):
    assert main([]) == 1


def test_unknown_subcommand_prints_usage(capsys):
    assert main(["frobnicate"]) == 1
    assert "usage:" in capsys.readouterr().err


def test_bad_flag_value_names_flag(capsys):
    assert main(["match", "--variant", "bogus", "--out", "x.csv"]) == 1
    assert "--variant" in capsys.readouterr().err


def test_missing_input_is_data_error(tmp_path, capsys):
    assert main(["eval", "--rankings", str(tmp_path / "nope.csv"), "--workdir", str(tmp_path)]) == 2
    assert "nope.csv" in capsys.readouterr().err


def test_bad_config_key_is_usage_error(tmp_path, capsys):
    (tmp_path / "c.cfg").write_text("train.nope = 1\n")
    assert main(["build-corpus", "--config", str(tmp_path / "c.cfg")]) == 1
    assert "c.cfg:1" in capsys.readouterr().err


def test_malformed_corpus_is_data_error(tmp_path, capsys):
    (tmp_path / "corpus.jsonl").write_text('{"id": "a", "title": "t"}\n{"id": 3}\n')
    assert main(["train", "--workdir", str(tmp_path)]) == 2
    assert "corpus.jsonl:2" in capsys.readouterr().err


def test_eval_reproduces_hand_computed_p_at_5(tmp_path, capsys):
    (tmp_path / "r.csv").write_text("paper_id,reviewer_id,rank\n" + "".join(
        f"p,r{i},{i + 1}\n" for i in range(5)))
    (tmp_path / "j.jsonl").write_text("".join(
        json.dumps({"paper_id": "p", "reviewer_id": f"r{i}", "score": s}) + "\n"
        for i, s in enumerate([3, 2, 1, 0, 3])))
    assert main(["eval", "--rankings", str(tmp_path / "r.csv"), "--judgments",
                 str(tmp_path / "j.jsonl"), "--out", str(tmp_path / "m.csv")]) == 0
    rows = dict(line.split(",") for line in (tmp_path / "m.csv").read_text().split()[1:])
    assert float(rows["soft_p@5"]) == 0.6 and float(rows["hard_p@5"]) == 0.4


def test_ablate_emits_seven_rankings(workdir):
    root, args = workdir
    assert main(["ablate", *args, "--out-dir", str(root / "abl")]) == 0
    files = sorted(p.name for p in (root / "abl").iterdir())
    assert len(files) == 7
    variants = {(root / "abl" / f).read_text().splitlines()[1].split(",")[-1] for f in files}
    assert variants == {"cof", "no_instruction", "s", "t", "c", "s+t+c", "s->t->c"}


def test_match_uses_config_default_keep_fractions(workdir):
    root, args = workdir
    assert main(["match", *args, "--out", str(root / "m.csv")]) == 0
    cfg = RunConfig.load(root / "tiny.cfg", environ={})
    assert cfg.chain_config() == ChainConfig()
    w = root / "w"
    model = FactorModel(EncoderWeights.load(w / "weights.cofw"), Vocabulary.load(w / "vocab.txt"))
    papers = load_corpus(w / "corpus.jsonl")
    direct = rank_submissions(load_corpus(w / "submissions.jsonl"),
                              load_reviewers(w / "reviewers.jsonl"),
                              {p.id: p for p in papers}, model, ChainConfig(), "cof")
    assert read_rankings(root / "m.csv") == {k: [r.reviewer_id for r in v] for k, v in direct.items()}


def test_embed_and_probe(workdir, capsys):
    root, args = workdir
    assert main(["embed", *args, "--factor", "citation", "--out", str(root / "e.cofe")]) == 0
    store = load_embeddings(root / "e.cofe")
    assert len(store) == 240 and store.dim == 8
    assert main(["probe", *args, "--out", str(root / "probe.csv")]) == 0
    lines = (root / "probe.csv").read_text().splitlines()
    assert lines[0] == "probe_kind,mean_rank,n_tasks"
    assert [l.split(",")[0] for l in lines[1:]] == ["citation", "semantic", "topic"]
