"""Joint objective identities, the training loop, and checkpointing."""

import dataclasses
import math

import numpy as np
import pytest
import torch

from docread.backbone import BackboneConfig
from docread.context import ContextConfig
from docread.corpus import generate_corpus, toy_config
from docread.detector import DetectorConfig
from docread.extractor import ExtractorConfig
from docread.model import DocumentModel, ModelConfig
from docread.reader import ReaderConfig
from docread.training import (
    TrainConfig,
    _per_text_nll,
    joint_loss,
    load_checkpoint,
    save_checkpoint,
    train,
    write_metrics_csv,
)


def tiny_model_cfg():
    return ModelConfig(
        backbone=BackboneConfig(stage_channels=(8, 8, 8, 8), d=8),
        detector=DetectorConfig(hidden=8),
        reader=ReaderConfig(roi_h=2, roi_w=8, d_r=16, d_s=16, emb_dim=8, attn_dim=16, t_max=20),
        context=ContextConfig(d_info=16, heads=2, layers=1, pos_bins=8),
        extractor=ExtractorConfig(d_f=16, hidden=8),
    )


def tiny_model(toy_schema, toy_vocab, seed=43, **cfg_overrides):
    torch.manual_seed(seed)
    cfg = dataclasses.replace(tiny_model_cfg(), **cfg_overrides)
    return DocumentModel(toy_schema, toy_vocab, cfg)


def test_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(lambda_rcg=-0.5)
    with pytest.raises(ValueError):
        TrainConfig(optimizer="sgd")
    with pytest.raises(ValueError):
        TrainConfig(epochs=0)


class TestJointLoss:
    def outputs(self, toy_schema, toy_vocab, toy_samples, n=2):
        model = tiny_model(toy_schema, toy_vocab)
        return model, [model.forward_train(s) for s in toy_samples[:n]]

    def test_total_is_exact_weighted_sum(self, toy_schema, toy_vocab, toy_samples):
        _, outs = self.outputs(toy_schema, toy_vocab, toy_samples)
        cfg = TrainConfig(lambda_rcg=0.7, lambda_info=2.5)
        total, terms = joint_loss(outs, cfg)
        want = terms["det"] + 0.7 * terms["rcg"] + 2.5 * terms["info"]
        assert total.item() == want.item()

    def test_zero_weights_drop_terms(self, toy_schema, toy_vocab, toy_samples):
        _, outs = self.outputs(toy_schema, toy_vocab, toy_samples)
        total, terms = joint_loss(outs, TrainConfig(lambda_rcg=0.0, lambda_info=0.0))
        assert total.item() == terms["det"].item()

    def test_all_terms_positive_and_finite(self, toy_schema, toy_vocab, toy_samples):
        _, outs = self.outputs(toy_schema, toy_vocab, toy_samples)
        total, terms = joint_loss(outs, TrainConfig())
        for name in ("det", "rcg", "info"):
            assert torch.isfinite(terms[name])
            assert terms[name].item() >= 0
        assert total.item() >= terms["det"].item()

    def test_uniform_logits_hit_log_k(self, toy_schema, toy_vocab, toy_samples):
        # All-zero logits make every step's NLL exactly ln(num classes).
        _, outs = self.outputs(toy_schema, toy_vocab, toy_samples)
        for o in outs:
            o.rcg_logits = torch.zeros_like(o.rcg_logits)
            o.tag_logits = torch.zeros_like(o.tag_logits)
        _, terms = joint_loss(outs, TrainConfig())
        assert terms["rcg"].item() == pytest.approx(math.log(len(toy_vocab)), abs=1e-5)
        assert terms["info"].item() == pytest.approx(math.log(toy_schema.num_tags), abs=1e-5)

    def test_per_text_weighting_not_per_char(self, toy_schema, toy_vocab, toy_samples):
        # Zeroing one long text's logits moves the pooled mean by exactly
        # 1/n of that text's delta, independent of its character count.
        model, outs = self.outputs(toy_schema, toy_vocab, toy_samples, n=1)
        out = outs[0]
        _, base = joint_loss([out], TrainConfig())
        per_text, _ = _per_text_nll(out.rcg_logits, out.rcg_targets, out.rcg_mask)
        assert base["rcg"].item() == pytest.approx(per_text.mean().item(), rel=1e-6)

    def test_empty_batch_rejected(self):
        with pytest.raises(ValueError, match="empty"):
            joint_loss([], TrainConfig())


class TestTrainLoop:
    def corpus(self):
        return generate_corpus(toy_config(n=3), seed=19)

    def run(self, samples, toy_schema, toy_vocab, epochs=2, **kw):
        cfg = TrainConfig(
            optimizer="adam", lr=1e-3, epochs=epochs, batch_size=2, eval_every=100, **kw
        )
        return train(
            samples,
            cfg,
            model_cfg=tiny_model_cfg(),
            schema=toy_schema,
            vocab=toy_vocab,
        )

    def test_two_runs_are_bitwise_identical(self, toy_schema, toy_vocab):
        samples = self.corpus()
        a = self.run(samples, toy_schema, toy_vocab)
        b = self.run(samples, toy_schema, toy_vocab)
        assert a.metrics == b.metrics
        for k, v in a.model.state_dict().items():
            assert torch.equal(v, b.model.state_dict()[k]), k

    def test_loss_decreases_on_average(self, toy_schema, toy_vocab):
        samples = self.corpus()
        res = self.run(samples, toy_schema, toy_vocab, epochs=8)
        first = res.metrics[0]["loss_rcg"]
        last = res.metrics[-1]["loss_rcg"]
        assert last < first

    def test_lr_schedule_steps(self, toy_schema, toy_vocab):
        samples = self.corpus()
        res = self.run(
            samples, toy_schema, toy_vocab, epochs=5, lr_decay=0.5, lr_decay_every=2
        )
        lrs = [row["lr"] for row in res.metrics]
        assert lrs == pytest.approx([1e-3, 1e-3, 5e-4, 5e-4, 2.5e-4])

    def test_empty_corpus_rejected(self, toy_schema, toy_vocab):
        with pytest.raises(ValueError, match="empty"):
            self.run([], toy_schema, toy_vocab)

    def test_nan_aborts_naming_the_term(self, toy_schema, toy_vocab):
        samples = self.corpus()
        model = tiny_model(toy_schema, toy_vocab)
        with torch.no_grad():
            model.backbone.stem[0].weight[0, 0, 0, 0] = float("nan")
        with pytest.raises(RuntimeError, match="non-finite det loss"):
            train(samples, TrainConfig(optimizer="adam", lr=1e-3, epochs=1), model=model)

    def test_eval_rows_carry_per_entity_f1(self, toy_schema, toy_vocab):
        samples = self.corpus()
        cfg = TrainConfig(optimizer="adam", lr=1e-3, epochs=2, eval_every=1)
        res = train(
            samples, cfg, model_cfg=tiny_model_cfg(), schema=toy_schema, vocab=toy_vocab
        )
        row = res.metrics[-1]
        for name in ("date", "total", "code"):
            assert f"f1_{name}" in row
        assert "f1_avg" in row and "seq_acc" in row


class TestArtifacts:
    def test_metrics_csv_layout(self, tmp_path):
        rows = [
            {"epoch": 0, "lr": 0.1, "loss_det": 1.0, "loss_rcg": 2.0, "loss_info": 3.0},
            {
                "epoch": 1,
                "lr": 0.1,
                "loss_det": 0.5,
                "loss_rcg": 1.5,
                "loss_info": 2.5,
                "f1_avg": 0.25,
                "f1_date": 0.5,
                "seq_acc": 0.1,
            },
        ]
        path = tmp_path / "metrics.csv"
        write_metrics_csv(path, rows, TrainConfig())
        lines = path.read_text().splitlines()
        assert lines[0].startswith("# optimizer=")
        header = lines[1].split(",")
        for col in ("epoch", "loss_det", "loss_rcg", "loss_info", "f1_avg", "f1_date"):
            assert col in header
        # The first epoch has no eval columns; they must come out empty, not crash.
        assert lines[2].endswith(",,,")

    def test_checkpoint_round_trip(self, tmp_path, toy_schema, toy_vocab, toy_samples):
        model = tiny_model(toy_schema, toy_vocab)
        path = tmp_path / "ckpt.pt"
        save_checkpoint(path, model, TrainConfig(), epoch=4)
        loaded = load_checkpoint(path)
        assert loaded.epoch == 4
        assert loaded.model.schema.entity_names == toy_schema.entity_names
        assert loaded.model.vocab.chars == toy_vocab.chars
        for k, v in model.state_dict().items():
            assert torch.equal(v, loaded.model.state_dict()[k]), k
        # The round-tripped model computes the same outputs.
        sample = toy_samples[0]
        a = model.infer(sample.image, boxes=np.asarray(sample.boxes))
        b = loaded.model.infer(sample.image, boxes=np.asarray(sample.boxes))
        assert a.texts == b.texts

    def test_checkpoint_version_guard(self, tmp_path, toy_schema, toy_vocab):
        model = tiny_model(toy_schema, toy_vocab)
        path = tmp_path / "ckpt.pt"
        save_checkpoint(path, model, None, epoch=0)
        blob = torch.load(path, weights_only=False)
        blob["version"] = 999
        torch.save(blob, path)
        with pytest.raises(ValueError, match="version"):
            load_checkpoint(path)

    def test_train_writes_artifacts(self, tmp_path, toy_schema, toy_vocab):
        samples = generate_corpus(toy_config(n=2), seed=23)
        cfg = TrainConfig(optimizer="adam", lr=1e-3, epochs=1, eval_every=1)
        res = train(
            samples,
            cfg,
            model_cfg=tiny_model_cfg(),
            schema=toy_schema,
            vocab=toy_vocab,
            out_dir=tmp_path,
        )
        assert (tmp_path / "metrics.csv").exists()
        assert res.checkpoint_path == tmp_path / "checkpoint.pt"
        assert res.checkpoint_path.exists()
        load_checkpoint(res.checkpoint_path)
