"""Acceptance suite: one test per release criterion, at stated tolerances.

Run with `pytest tests/test_acceptance.py -v -s` to see the PASS line and
elapsed time per criterion. The training criteria are scaled analogs on
procedurally generated data; everything else is exact or oracle-checked.
"""
import json
import math
import sys
import time
from contextlib import contextmanager

import jsonschema
import numpy as np
import pytest
import torch
import torch.nn.functional as F
from fastapi.testclient import TestClient

from conftest import chirp_utterance, make_tone
from gradcheck import relative_gradient_error
from swarclone import corpus, dsp, encoder as enc, synth, textnorm, vocoder as voc
from swarclone import eval as evalmod
from swarclone.encoder import SpeakerEmbedding
from swarclone.mos import ClipPair, RatingRecord, aggregate, create_app
from synthetic_speakers import build_corpus_tree
from test_dsp import mixture_at_snr
from test_eval import brute_force_eer
from test_textnorm import (
    ROW_NUMERALS_RAW, ROW_NUMERALS_OUT,
    ROW_SEGMENT_RAW, ROW_SEGMENT_OUT,
    ROW_STOP_RAW, ROW_STOP_OUT,
    oracle_number_words,
)


@contextmanager
def criterion(name: str, budget_s: float):
    start = time.perf_counter()
    try:
        yield
    except Exception:
        print(f"ACCEPTANCE {name}: FAIL ({time.perf_counter() - start:.1f}s)",
              file=sys.stderr)
        raise
    elapsed = time.perf_counter() - start
    print(f"ACCEPTANCE {name}: PASS ({elapsed:.1f}s, budget {budget_s:.0f}s)",
          file=sys.stderr)
    assert elapsed < budget_s, f"{name} exceeded its runtime budget"


# ---------------------------------------------------------------------------
# Criterion 1: text normalization golden tests (< 5 s)
# ---------------------------------------------------------------------------

def test_text_normalization_golden():
    with criterion("textnorm-golden", 5.0):
        assert " ".join(textnorm.normalize(ROW_NUMERALS_RAW)) == ROW_NUMERALS_OUT
        assert " ".join(textnorm.normalize(ROW_SEGMENT_RAW)) == ROW_SEGMENT_OUT
        assert " ".join(textnorm.normalize(ROW_STOP_RAW)) == ROW_STOP_OUT
        assert textnorm.number_to_words(7) == "सात"
        assert textnorm.number_to_words(15) == "पन्ध्र"
        sentences = textnorm.normalize(ROW_SEGMENT_RAW)
        assert len(sentences) == 2 and sentences[0].endswith("थिएँ।")
        for n in range(10001):
            assert textnorm.number_to_words(n) == oracle_number_words(n)


# ---------------------------------------------------------------------------
# Criterion 2: DSP bit-exactness on the published configuration (< 10 s)
# ---------------------------------------------------------------------------

def test_dsp_frontend_exactness():
    with criterion("dsp-frontend", 10.0):
        cfg = dsp.DspConfig()
        assert (cfg.max_wav_value, cfg.sampling_rate_hz) == (32768.0, 22050)
        assert (cfg.filter_length, cfg.hop_length, cfg.win_size) == (800, 200, 800)
        assert (cfg.n_mel_channels, cfg.mel_fmin_hz, cfg.mel_fmax_hz) == (80, 0.0, 7600.0)

        filterbank = dsp.mel_filterbank(80, 800, 22050, 0.0, 7600.0)
        assert filterbank.shape == (80, 401)

        rng = np.random.default_rng(0)
        samples = 0.45 * rng.uniform(-1, 1, 33075)
        mel_full = dsp.mel_spectrogram(dsp.AudioClip(samples, 22050), cfg)
        mel_half = dsp.mel_spectrogram(dsp.AudioClip(samples / 2, 22050), cfg)
        assert mel_full.n_frames == 1 + 33075 // 200
        unclamped = mel_half.frames > math.log(1e-5)
        np.testing.assert_allclose(
            (mel_full.frames - mel_half.frames)[unclamped], math.log(2), atol=1e-9
        )

        tone = dsp.AudioClip(make_tone(1000, 1.0, 22050), 22050)
        energy = dsp.mel_spectrogram(tone, cfg).frames.mean(axis=0)
        centers = dsp.mel_to_hz(
            np.linspace(dsp.hz_to_mel(0.0), dsp.hz_to_mel(7600.0), 82)
        )[1:-1]
        best = int(np.argmax(energy))
        assert centers[max(best - 1, 0)] <= 1000.0 <= centers[min(best + 1, 79)]

        zeros = dsp.mel_spectrogram(dsp.AudioClip(np.zeros(22050), 22050), cfg)
        assert zeros.n_frames == 111
        assert np.all(zeros.frames == math.log(1e-5))


# ---------------------------------------------------------------------------
# Criterion 3: gradient suite vs central finite differences (< 2 min)
# ---------------------------------------------------------------------------

def test_gradient_suite():
    with criterion("gradient-suite", 120.0):
        torch.manual_seed(0)
        rng = np.random.default_rng(0)

        encoder_model = enc.SpeakerEncoder(
            enc.EncoderConfig(lstm_layers=2, hidden_size=8, embedding_size=8,
                              speakers_per_batch=2, utterances_per_speaker=3),
            n_mels=5,
        ).double()
        mels = torch.as_tensor(rng.normal(0, 1, (6, 7, 5)), dtype=torch.float64)

        def ge2e_path():
            embeddings = encoder_model(mels).view(2, 3, 8)
            loss, _ = enc.ge2e_loss(
                embeddings, encoder_model.sim_weight, encoder_model.sim_bias
            )
            return loss

        error = relative_gradient_error(encoder_model, ge2e_path)
        assert error < 1e-4, f"GE2E gradient error {error}"

        synth_model = synth.MelSynthesizer(
            synth.SynthConfig(char_embedding_dim=8, encoder_dim=8, decoder_dim=8,
                              attention_dim=4, prenet_dim=4, mel_channels=6),
            vocab_size=6, speaker_dim=5,
        ).double()
        target_mel = torch.as_tensor(rng.normal(0, 1, (4, 6)))
        target_gate = torch.as_tensor(np.array([0.0, 0.0, 0.0, 1.0]))
        speaker = SpeakerEmbedding(np.eye(5)[1])

        def synth_path():
            mel, gate, _ = synth.teacher_forced(synth_model, [2, 3, 4], speaker, target_mel)
            total, _, _ = synth.synth_loss((mel, gate), target_mel, target_gate)
            return total

        error = relative_gradient_error(synth_model, synth_path)
        assert error < 1e-4, f"synthesizer gradient error {error}"

        vocoder_model = voc.WaveVocoder(voc.VocoderConfig(
            hop_length=4, gru_size=8, conditioning_channels=4,
            residual_blocks=1, mu_classes=16, mel_channels=6,
        )).double()
        mel = torch.as_tensor(rng.normal(0, 1, (5, 6)), dtype=torch.float64)
        prev = torch.as_tensor(rng.integers(0, 16, 20))
        target = torch.as_tensor(rng.integers(0, 16, 20))

        def vocoder_path():
            logits, _ = vocoder_model.logits(prev, vocoder_model.conditioning(mel))
            return F.cross_entropy(logits, target)

        error = relative_gradient_error(vocoder_model, vocoder_path)
        assert error < 1e-4, f"vocoder gradient error {error}"


# ---------------------------------------------------------------------------
# Criterion 4: EER oracle equivalence on 200 random score sets (< 5 s)
# ---------------------------------------------------------------------------

def test_eer_oracle_equivalence():
    with criterion("eer-oracle", 5.0):
        rng = np.random.default_rng(20240809)
        for _ in range(200):
            genuine = tuple(np.round(rng.uniform(-1, 1, int(rng.integers(1, 51))), 3))
            impostor = tuple(np.round(rng.uniform(-1, 1, int(rng.integers(1, 51))), 3))
            ours = evalmod.compute_eer(evalmod.ScoreSet(genuine, impostor))
            oracle = brute_force_eer(list(genuine), list(impostor))
            assert ours[0] == pytest.approx(oracle[0], abs=1e-12)
            assert ours[1] == pytest.approx(oracle[1], abs=1e-12)
        perfect, _ = evalmod.compute_eer(
            evalmod.ScoreSet((0.9, 0.8, 0.7), (0.2, 0.1, 0.0))
        )
        assert perfect == 0.0
        same = tuple(np.linspace(-1, 1, 11))
        chance, _ = evalmod.compute_eer(evalmod.ScoreSet(same, same))
        assert chance == 0.5


# ---------------------------------------------------------------------------
# Criteria 5 and 6: scaled encoder training, projection, cosine banding
# ---------------------------------------------------------------------------

DESK_ENCODER = enc.EncoderConfig(
    lstm_layers=3, hidden_size=64, embedding_size=64,
    speakers_per_batch=16, utterances_per_speaker=10, learning_rate=0.1,
)
TRAIN_SEED = 1234
TRAIN_STEPS = 400


@pytest.fixture(scope="module")
def synthetic_manifest(tmp_path_factory):
    root = tmp_path_factory.mktemp("synthetic_corpus")
    return build_corpus_tree(root, n_speakers=20, chunks_per_speaker=30)


@pytest.fixture(scope="module")
def trained_encoder(synthetic_manifest):
    start = time.perf_counter()
    model, metrics = enc.train_encoder(
        DESK_ENCODER, synthetic_manifest, steps=TRAIN_STEPS, seed=TRAIN_SEED,
        holdout_fraction=0.2, eer_interval=100,
    )
    elapsed = time.perf_counter() - start
    _, holdout_manifest = corpus.split_holdout(synthetic_manifest, 0.2, TRAIN_SEED)
    holdout_chunks = enc.load_chunk_mels(holdout_manifest, dsp.EncoderFrontendConfig())
    return model, metrics, holdout_chunks, elapsed


def _holdout_embeddings(model, holdout_chunks):
    embeddings = {}
    for speaker_id, mels in holdout_chunks.items():
        batch = torch.as_tensor(np.stack(mels), dtype=torch.float32)
        with torch.no_grad():
            embeddings[speaker_id] = list(model(batch).double().numpy())
    return embeddings


def test_scaled_encoder_training(trained_encoder):
    with criterion("encoder-training", 1800.0):
        model, metrics, holdout_chunks, elapsed = trained_encoder
        assert TRAIN_STEPS <= 3000
        assert elapsed < 1800.0, f"training took {elapsed:.0f}s"
        final_eer = [m["eer"] for m in metrics if "eer" in m][-1]
        print(f"  encoder holdout EER after {TRAIN_STEPS} steps: {final_eer:.4f}",
              file=sys.stderr)
        assert final_eer < 0.05

        embeddings = _holdout_embeddings(model, holdout_chunks)
        labels, vectors = [], []
        for speaker_id, vecs in sorted(embeddings.items()):
            labels.extend([speaker_id] * len(vecs))
            vectors.extend(vecs)
        projection = evalmod.project_embeddings(
            np.asarray(vectors), labels, method="neighbor-embed", seed=0
        )
        score = evalmod.silhouette(projection.points, labels)
        print(f"  holdout projection silhouette: {score:.3f}", file=sys.stderr)
        assert score > 0.6


def test_cosine_banding(trained_encoder):
    with criterion("cosine-banding", 120.0):
        model, _, holdout_chunks, _ = trained_encoder
        embeddings = _holdout_embeddings(model, holdout_chunks)
        scores = evalmod.verification_scores(embeddings)
        roc_auc = evalmod.auc(scores)
        print(f"  same-vs-cross speaker AUC: {roc_auc:.4f}", file=sys.stderr)
        assert roc_auc > 0.95
        # banding thresholds applied exactly
        assert evalmod.band(0.95) == "Excellent"
        assert evalmod.band(0.9506) == "Excellent"
        assert evalmod.band(0.9499999) == "Good"
        assert evalmod.band(0.90) == "Good"
        assert evalmod.band(0.85) == "Fair"
        assert evalmod.band(0.8499999) == "Poor"


# ---------------------------------------------------------------------------
# Criterion 7: synthesizer single-utterance overfit (< 15 min)
# ---------------------------------------------------------------------------

def test_synthesizer_overfit(tmp_path):
    with criterion("synth-overfit", 900.0):
        clip = chirp_utterance(seconds=1.5, sample_rate=22050)
        speaker_dir = tmp_path / "spk00"
        speaker_dir.mkdir()
        dsp.write_wav(speaker_dir / "utt.wav", clip)
        text = " ".join(textnorm.normalize("नमस्ते संसार"))
        (speaker_dir / "utt.txt").write_text(text, encoding="utf-8")
        manifest = corpus.build_manifest(tmp_path, kind="synth")

        torch.manual_seed(0)
        enc_model = enc.SpeakerEncoder(
            enc.EncoderConfig(hidden_size=32, embedding_size=32), n_mels=40
        )
        encoder_path = tmp_path / "enc.ckpt"
        enc.save_encoder(encoder_path, enc_model, dsp.EncoderFrontendConfig())

        steps = 500
        assert 200 <= steps <= 1000
        model, vocab, metrics = synth.train_synth(
            synth.SynthConfig(), manifest, encoder_path, steps=steps, seed=11
        )
        mel_ratio = metrics[-1]["mel"] / metrics[0]["mel"]
        print(f"  synth mel loss ratio after {steps} steps: {mel_ratio:.4f}",
              file=sys.stderr)
        assert mel_ratio < 0.10

        example = synth.prepare_examples(
            manifest, encoder_path, vocab, dsp.DspConfig()
        )[0]
        target_frames = example.target_mel.shape[0]
        output = synth.infer(model, vocab.encode(text), example.speaker)
        print(f"  free-running frames: {output.mel.shape[0]} "
              f"(target {target_frames}, truncated={output.truncated})",
              file=sys.stderr)
        assert not output.truncated, "gate never fired"
        assert abs(output.mel.shape[0] - target_frames) <= 0.2 * target_frames
        row_sums = output.alignment.sum(axis=1)
        np.testing.assert_allclose(row_sums, 1.0, atol=1e-5)

        # trained-model non-degeneracy: a different speaker vector must
        # change the decoded mel
        other_vector = np.roll(example.speaker.vector, 1) * -1.0
        other = SpeakerEmbedding(other_vector / np.linalg.norm(other_vector))
        alt = synth.infer(model, vocab.encode(text), other)
        shared = min(alt.mel.shape[0], output.mel.shape[0])
        assert not np.allclose(alt.mel[:shared], output.mel[:shared], atol=1e-3)


# ---------------------------------------------------------------------------
# Criterion 8: vocoder single-clip overfit and length laws (< 20 min)
# ---------------------------------------------------------------------------

def test_vocoder_overfit():
    with criterion("vocoder-overfit", 1200.0):
        cfg = voc.VocoderConfig(learning_rate=3e-3)
        # deterministic target: a noise floor is unlearnable for argmax rollout
        clip = chirp_utterance(seconds=0.2, sample_rate=22050, harmonics=6, noise=0.0)
        mel, trimmed = voc.make_vocoder_pair(clip, dsp.DspConfig())
        model, metrics = voc.train_vocoder(cfg, [(mel, trimmed)], steps=700, seed=5)
        print(f"  vocoder CE after 700 steps: {metrics[-1]['loss']:.4f} nats",
              file=sys.stderr)
        assert metrics[-1]["loss"] < 0.5
        out = voc.generate(model, mel, mode="argmax")
        assert len(out) == mel.n_frames * cfg.hop_length
        mae = float(np.mean(np.abs(out.samples - trimmed.samples)))
        print(f"  regeneration MAE: {mae:.4f}", file=sys.stderr)
        assert mae < 0.05

        # init loss on random data is ln(mu_classes)
        torch.manual_seed(0)
        fresh = voc.WaveVocoder(voc.VocoderConfig())
        rng = np.random.default_rng(0)
        conditioning = fresh.conditioning(
            torch.as_tensor(rng.normal(0, 1, (4, 80)), dtype=torch.float32)
        )
        logits, _ = fresh.logits(
            torch.as_tensor(rng.integers(0, 256, 300)), conditioning[:300]
        )
        loss = F.cross_entropy(logits, torch.as_tensor(rng.integers(0, 256, 300)))
        assert abs(float(loss.detach()) - math.log(256)) < 0.05

        # length law on 100 random mels (small generator for speed)
        torch.manual_seed(1)
        tiny = voc.WaveVocoder(voc.VocoderConfig(
            hop_length=20, gru_size=8, conditioning_channels=4,
            residual_blocks=1, mel_channels=8,
        ))
        for _ in range(100):
            frames = int(rng.integers(1, 9))
            random_mel = dsp.MelSpectrogram(rng.normal(0, 1, (frames, 8)))
            generated = voc.generate(tiny, random_mel, mode="argmax")
            assert len(generated) == frames * 20


# ---------------------------------------------------------------------------
# Criterion 9: SNR analog (< 30 s)
# ---------------------------------------------------------------------------

def test_snr_analog(tmp_path):
    with criterion("snr-analog", 30.0):
        for target in (15.0, 20.0, 25.0, 30.0):
            estimate = dsp.estimate_snr(mixture_at_snr(target, seconds=3.0))
            assert abs(estimate.db - target) <= 1.5, (target, estimate.db)
        entries = []
        for i, target in enumerate((20.0, 30.0)):
            clip = mixture_at_snr(target, seconds=2.0, seed=i)
            path = tmp_path / f"clip{i}.wav"
            dsp.write_wav(path, clip)
            entries.append(corpus.ManifestEntry(str(path), f"spk{i}", 2.0))
        report = evalmod.snr_report(corpus.Manifest(entries))
        for field in ("mean_snr_db", "std_snr_db", "band_low_db",
                      "band_high_db", "per_speaker_mean_db"):
            assert field in report
        assert report["band_low_db"] <= report["mean_snr_db"] <= report["band_high_db"]


# ---------------------------------------------------------------------------
# Criterion 10: MOS aggregation and API contract (no UI required)
# ---------------------------------------------------------------------------

MOS_AGGREGATE_SCHEMA = {
    "type": "object",
    "required": ["empty", "rating_count", "speakers", "genders", "overall"],
    "properties": {
        "empty": {"type": "boolean"},
        "rating_count": {"type": "integer", "minimum": 0},
        "speakers": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["speaker_id", "gender", "rating_count",
                             "quality_mean", "quality_std", "quality_mos",
                             "similarity_mean", "similarity_std", "similarity_mos"],
                "properties": {
                    "quality_mean": {"type": "number", "minimum": 1, "maximum": 5},
                    "similarity_mean": {"type": "number", "minimum": 1, "maximum": 5},
                    "quality_std": {"type": "number", "minimum": 0},
                    "similarity_std": {"type": "number", "minimum": 0},
                    "quality_mos": {"type": "string",
                                    "pattern": "^[1-5]\\.\\d{2} ± \\d+\\.\\d{2}$"},
                },
            },
        },
        "genders": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["gender", "speaker_count",
                             "quality_mean", "quality_std", "quality_std_ratings",
                             "similarity_mean", "similarity_std",
                             "similarity_std_ratings", "quality_mos", "similarity_mos"],
                "properties": {"gender": {"enum": ["Male", "Female"]}},
            },
        },
        "overall": {
            "type": "object",
            "required": ["rating_count", "speaker_count", "quality_mean",
                         "quality_std", "quality_std_ratings",
                         "similarity_mean", "similarity_std",
                         "similarity_std_ratings"],
        },
    },
}


def test_mos_aggregation_and_api(tmp_path):
    with criterion("mos-service", 60.0):
        pairs = [
            ClipPair("pA", "spkA", "male", "pA_o.wav", "pA_c.wav"),
            ClipPair("pB", "spkB", "female", "pB_o.wav", "pB_c.wav"),
        ]
        records = [
            RatingRecord("r1", "pA", 4, 4, 1.0),
            RatingRecord("r2", "pA", 5, 4, 1.0),
            RatingRecord("r3", "pA", 3, 4, 1.0),
            RatingRecord("r1", "pB", 2, 5, 1.0),
            RatingRecord("r2", "pB", 4, 3, 1.0),
        ]
        result = aggregate(records, pairs).payload
        # hand-computed: spkA quality mean 4, population std sqrt(2/3)
        spk_a = next(s for s in result["speakers"] if s["speaker_id"] == "spkA")
        assert spk_a["quality_mean"] == pytest.approx(4.0)
        assert spk_a["quality_std"] == pytest.approx(math.sqrt(2 / 3))
        assert spk_a["similarity_mean"] == pytest.approx(4.0)
        assert spk_a["similarity_std"] == 0.0
        spk_b = next(s for s in result["speakers"] if s["speaker_id"] == "spkB")
        assert spk_b["quality_mean"] == pytest.approx(3.0)
        assert spk_b["quality_std"] == pytest.approx(1.0)
        male = next(g for g in result["genders"] if g["gender"] == "Male")
        assert male["quality_mean"] == pytest.approx(4.0)
        assert male["quality_std"] == 0.0  # one speaker in the group
        assert result["overall"]["quality_mean"] == pytest.approx(3.5)
        jsonschema.validate(result, MOS_AGGREGATE_SCHEMA)

        # API contract: 200 happy path, 422 field errors, 400 malformed, 404s
        for pair in pairs:
            for ref in (pair.original_audio, pair.cloned_audio):
                clip = dsp.AudioClip(0.1 * np.sin(np.linspace(0, 60, 2205)), 22050)
                dsp.write_wav(tmp_path / ref, clip)
        study = tmp_path / "study.jsonl"
        with open(study, "w", encoding="utf-8") as fh:
            for pair in pairs:
                fh.write(json.dumps(pair.__dict__) + "\n")
        client = TestClient(create_app(study, tmp_path / "ratings.jsonl"))

        for record in records:
            response = client.post("/api/ratings", json={
                "rater_id": record.rater_id, "pair_id": record.pair_id,
                "quality": record.quality, "similarity": record.similarity,
            })
            assert response.status_code == 200
        served = client.get("/api/aggregate").json()
        jsonschema.validate(served, MOS_AGGREGATE_SCHEMA)
        assert served["speakers"] == result["speakers"]

        assert client.post("/api/ratings", json={
            "rater_id": "r", "pair_id": "pA", "quality": 6, "similarity": 1,
        }).status_code == 422
        assert client.post("/api/ratings", json={
            "rater_id": "r", "pair_id": "pA", "quality": 0, "similarity": 1,
        }).status_code == 422
        assert client.post(
            "/api/ratings", content=b"{broken",
            headers={"content-type": "application/json"},
        ).status_code == 400
        assert client.post("/api/ratings", json={
            "rater_id": "r", "pair_id": "nope", "quality": 3, "similarity": 3,
        }).status_code == 404
        assert client.get("/api/audio/unknown.orig").status_code == 404
        assert client.get("/api/pairs", params={"token": "t"}).status_code == 200
