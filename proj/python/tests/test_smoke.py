import json

import numpy as np
import pytest

import vqaug

SMALL = [
    "world.train_size=120",
    "world.val_size=40",
    "model.d_emb=6",
    "model.d_hidden=8",
    "training.epochs=3",
    "training.adv_start=1",
    "training.adv_end=2",
    "training.batch_size=16",
]


@pytest.fixture(scope="module")
def run(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    cfg = vqaug.load_config(overrides=SMALL + [f"out={out}"])
    gen = vqaug.generate(cfg)
    para = vqaug.paraphrase(cfg)
    van = vqaug.train(cfg, "vanilla")
    adv = vqaug.train(cfg, "adversarial")
    return cfg, gen, para, van, adv


def test_config_round_trip():
    cfg = vqaug.load_config(overrides=["seed=7"])
    assert cfg.seed == 7
    assert json.loads(cfg.to_json())["seed"] == 7
    assert cfg.problems() == []


def test_invalid_override_raises():
    with pytest.raises(Exception):
        vqaug.load_config(overrides=["world.train_size=-1"])


def test_pipeline(run):
    cfg, gen, para, van, adv = run
    assert gen["train_examples"] == 120
    assert gen["val_examples"] == 40
    assert 0.0 <= para["coverage"] <= 1.0
    assert 0.0 <= van["final_val_accuracy"] <= 1.0
    reports = vqaug.evaluate(cfg, ["vanilla", "adversarial"])
    assert [r["model"] for r in reports] == ["vanilla", "adversarial"]
    for r in reports:
        assert r["examples"] == 40
        assert r["attackers"]


def test_split_and_model(run):
    cfg, gen, para, van, adv = run
    split = vqaug.load_split(f"{cfg.out}/data/val.bin")
    n = len(split["questions"])
    assert split["visuals"].shape[0] == n == 40
    model = vqaug.Model.load(van["checkpoint"])
    v = split["visuals"][0]
    q = split["questions"][0]
    a = int(split["answers"][0])
    p = model.probabilities(v, q)
    assert p.shape == (len(model.answer_vocab),)
    assert abs(p.sum() - 1.0) < 1e-9
    assert model.predict(v, q) == int(np.argmax(p))
    g = model.visual_gradient(v, q, a)
    assert g.shape == v.shape
    h = 1e-6
    e = np.zeros_like(v)
    e[0, 0] = h
    fd = (model.loss(v + e, q, a) - model.loss(v - e, q, a)) / (2 * h)
    assert abs(fd - g[0, 0]) <= 1e-5 * max(1.0, abs(fd))
    adv_v = model.attack(v, q, a, kind="fgsm", epsilon=0.3, v_max=split["v_max"])
    assert adv_v.shape == v.shape
    assert np.max(np.abs(adv_v - v)) <= 0.3 + 1e-12


def test_metrics():
    assert vqaug.accuracy([1, 2, 3], [1, 0, 3]) == pytest.approx(2 / 3)
    assert vqaug.flip_rate([1, 2], [1, 3]) == pytest.approx(0.5)
    assert vqaug.edit_distance("what color is it", "what colour is it") == 1


def test_paraphraser(run):
    cfg = run[0]
    split = vqaug.load_split(f"{cfg.out}/data/val.bin")
    para = vqaug.Paraphraser(
        f"{cfg.out}/lexicons/pivot-a.tsv",
        f"{cfg.out}/lexicons/pivot-b.tsv",
        split["question_vocab"],
    )
    q = split["questions"][0]
    assert para.semantic_score(q, q) == pytest.approx(1.0, abs=1e-12)
    dist = para.next_word(q)
    assert dist.shape == (len(para.target_words),)
    assert abs(dist.sum() - 1.0) < 1e-9
    for c in para.qadvgen(q, 2):
        assert c["text"] != q
        assert c["score"] <= 1.0 or c["penalized"]
