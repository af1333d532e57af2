"""
Command implementations behind the dmha CLI

Each cmd_* function takes a RunConfig plus its own arguments, does its
work through the library modules and returns a JSON-serializable result
(or the path it wrote).
"""

import json
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from dmha import EMOTIONS
from dmha.augment import AugmentPolicy, augment, policy_summary
from dmha.checkpoint import Checkpoint, load_checkpoint, restore_model, save_checkpoint
from dmha.config import RunConfig
from dmha.dataset import (
    assign_splits,
    feature_shape,
    load_items,
    select_split,
    source_from_metadata,
    split_entries,
    waveform_stats,
)
from dmha.exceptions import ConfigurationException, EnsembleException, FormatException, ModelException
from dmha.features import (
    IMBALANCE_PROFILE,
    compute_waveform_stats,
    mel_features,
    normalize_waveform,
    synth_dataset,
)
from dmha.formats import ManifestEntry, read_manifest, read_wav, write_features, write_manifest, write_wav
from dmha.gradcheck import run_gradcheck
from dmha.heatmap import render_attention_maps, render_confusion
from dmha.history import TrainingHistory
from dmha.logger import get_logger
from dmha.metrics import evaluation_report
from dmha.model import AttentionVariant, ModelConfig, create_model
from dmha.postprocess import EnsembleSpec, best_member, hard_vote, predict_matrix, tune_thresholds
from dmha.rng import create_streams
from dmha.train import evaluate_macro_f1, predict_probs, train_loop

logger = get_logger(__name__)

MANIFEST_NAME = 'manifest.jsonl'
CHECKPOINT_NAME = 'best.dmhc'
RUN_LOG_NAME = 'run_log.jsonl'
STATS_NAME = 'waveform_stats.json'


def _write_json(path: Path, data: Dict):
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(data, indent=2) + '\n', encoding='utf-8')
    except OSError as e:
        raise FormatException(f"cannot write {path}: {e}") from e


def _read_json(path) -> Dict:
    try:
        with open(path, 'r', encoding='utf-8') as f:
            return json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise FormatException(f"cannot read JSON document {path}: {e}") from e


def _require_pools(policy: AugmentPolicy, command: str):
    """Reject waveform augmentation that could draw from an empty pool"""
    if policy.apply_prob > 0 and (not policy.rir_pool or not policy.noise_pool):
        raise ConfigurationException(
            f"{command} augments waveforms with apply_prob {policy.apply_prob:g} but the "
            f"RIR pool has {len(policy.rir_pool)} and the noise pool {len(policy.noise_pool)} files; "
            f"set augment.rir_dir and augment.noise_dir or augment.apply_prob = 0")


def cmd_synth(cfg: RunConfig, out_dir) -> Path:
    """Write the synthetic multimodal corpus as DMHF files plus a manifest"""
    out_dir = Path(out_dir)
    data = cfg.data
    records = synth_dataset(
        n_per_class=data.synth_per_class,
        frames=data.synth_frames,
        text_frames=data.synth_text_frames,
        dim=data.synth_dim,
        num_layers=data.synth_layers,
        seed=cfg.seed,
        sigma=data.synth_sigma,
        profile=IMBALANCE_PROFILE if data.synth_imbalanced else None,
    )
    splits = assign_splits([r.label for r in records], data.validation_fraction)

    entries = []
    for record, split in zip(records, splits):
        acoustic_path = out_dir / 'features' / f'{record.utterance_id}.acoustic.dmhf'
        text_path = out_dir / 'features' / f'{record.utterance_id}.text.dmhf'
        write_features(acoustic_path, record.acoustic)
        write_features(text_path, record.text)
        entries.append(ManifestEntry(id=record.utterance_id, label=record.label,
                                     acoustic_path=acoustic_path, text_path=text_path, split=split))

    manifest = out_dir / MANIFEST_NAME
    write_manifest(manifest, entries)
    logger.info(f"Synthetic corpus: {len(entries)} utterances written to {out_dir}")
    return manifest


def cmd_extract(cfg: RunConfig, manifest, out_dir) -> Path:
    """Log-mel DMHF features for every WAV entry, normalized with training statistics"""
    out_dir = Path(out_dir)
    entries = read_manifest(manifest)
    missing = [e.id for e in entries if e.wav_path is None]
    if missing:
        raise FormatException(f"extract needs wav_path on every entry, missing for {missing[:3]}")

    train_entries, _ = split_entries(entries, cfg.data.validation_fraction)
    train_ids = {e.id for e in train_entries}
    waveforms = {e.id: read_wav(e.wav_path) for e in entries}
    stats = compute_waveform_stats([w for i, w in waveforms.items() if i in train_ids])
    _write_json(out_dir / STATS_NAME, stats.to_dict())

    out_entries = []
    for entry in entries:
        features = mel_features(normalize_waveform(waveforms[entry.id], stats),
                                cfg.data.n_mels, cfg.data.sample_rate)
        acoustic_path = out_dir / 'features' / f'{entry.id}.mel.dmhf'
        write_features(acoustic_path, features[None, :, :])
        split = entry.split or ('train' if entry.id in train_ids else 'validation')
        out_entries.append(ManifestEntry(id=entry.id, label=entry.label, acoustic_path=acoustic_path,
                                         text_path=entry.text_path, split=split))

    out_manifest = out_dir / MANIFEST_NAME
    write_manifest(out_manifest, out_entries)
    logger.info(f"Extracted {cfg.data.n_mels}-band log-mel features for {len(out_entries)} utterances "
                f"(waveform mean {stats.mean:.5f}, std {stats.std:.5f})")
    return out_manifest


def cmd_augment(cfg: RunConfig, manifest, out_dir) -> Path:
    """Write one training-mode augmented copy of every WAV in a manifest"""
    out_dir = Path(out_dir)
    entries = read_manifest(manifest)
    policy = cfg.augment.to_policy()
    if entries:
        _require_pools(policy, 'augment')
    streams = create_streams(cfg.seed)
    logger.info(f"Augmenting with {policy_summary(policy)}")

    out_entries = []
    for entry in entries:
        if entry.wav_path is None:
            raise FormatException(f"{entry.id}: augment needs a wav_path")
        samples = augment(read_wav(entry.wav_path), policy, streams.stream('augment-export', entry.id),
                          training=True, rate=cfg.data.sample_rate)
        wav_path = out_dir / 'wav' / f'{entry.id}.wav'
        write_wav(wav_path, samples, cfg.data.sample_rate)
        out_entries.append(ManifestEntry(id=entry.id, label=entry.label, wav_path=wav_path,
                                         text_path=entry.text_path, split=entry.split))

    out_manifest = out_dir / MANIFEST_NAME
    write_manifest(out_manifest, out_entries)
    return out_manifest


def cmd_train(cfg: RunConfig, manifest, out_dir, resume: Optional[str] = None) -> Path:
    """Train on a manifest and write the best checkpoint plus the run log"""
    out_dir = Path(out_dir)
    entries = read_manifest(manifest)
    train_entries, val_entries = split_entries(entries, cfg.data.validation_fraction)
    train_items = load_items(train_entries)
    val_items = load_items(val_entries)

    num_layers, dim = feature_shape(train_items + val_items, cfg.data.n_mels)
    if (cfg.model.num_layers, cfg.model.dim) != (num_layers, dim):
        logger.info(f"Model input set from features: {num_layers} layers of dim {dim} "
                    f"(config had {cfg.model.num_layers}×{cfg.model.dim})")
        cfg.model.num_layers, cfg.model.dim = num_layers, dim

    stats = waveform_stats(train_items)
    metadata = {
        'config': cfg.to_dict(),
        'waveform_stats': stats.to_dict() if stats else None,
        'n_mels': cfg.data.n_mels,
        'sample_rate': cfg.data.sample_rate,
    }
    policy = None
    if stats:
        policy = cfg.augment.to_policy()
        _require_pools(policy, 'train')
    source = source_from_metadata(metadata, policy=policy)

    start_epoch, learning_rate, best_score = 0, None, None
    if resume:
        resumed = load_checkpoint(resume)
        model = restore_model(resumed)
        if (model.config.num_layers, model.config.dim) != (num_layers, dim):
            raise ModelException(f"checkpoint expects {model.config.num_layers}×{model.config.dim} features, "
                                 f"manifest has {num_layers}×{dim}")
        source = source_from_metadata(resumed.metadata, policy=source.policy)
        metadata['waveform_stats'] = resumed.metadata.get('waveform_stats')
        best_score = evaluate_macro_f1(model, val_items, source, cfg.data.workers)
        logger.info(f"Resumed {resume} at epoch {resumed.epoch}: validation macro-F1 {best_score:.6f} "
                    f"(stored {resumed.validation_macro_f1})")
        start_epoch = resumed.epoch
        learning_rate = resumed.metadata.get('learning_rate')
    else:
        model = create_model(ModelConfig(**cfg.model.to_dict()), create_streams(cfg.seed).stream('init'))

    history = TrainingHistory(out_dir / RUN_LOG_NAME, append=bool(resume))
    best = train_loop(model, train_items, val_items, cfg.train, source=source, workers=cfg.data.workers,
                      history=history, metadata=metadata, start_epoch=start_epoch,
                      learning_rate=learning_rate, best_score=best_score)
    path = out_dir / CHECKPOINT_NAME
    save_checkpoint(best, path)
    return path


def _probabilities(checkpoint: Checkpoint, items: Sequence, workers: int) -> np.ndarray:
    model = restore_model(checkpoint)
    return predict_probs(model, items, source_from_metadata(checkpoint.metadata), workers)


def cmd_tune_thresholds(cfg: RunConfig, checkpoint_path, manifest, split: Optional[str] = None) -> Dict:
    """Tune per-class thresholds on one split and store them in the checkpoint"""
    checkpoint = load_checkpoint(checkpoint_path)
    split = split or cfg.data.threshold_split
    entries = select_split(read_manifest(manifest), split, cfg.data.validation_fraction)
    items = load_items(entries)
    truth = [item.label for item in items]

    probs = _probabilities(checkpoint, items, cfg.data.workers)
    before = evaluation_report(np.argmax(probs, axis=1), truth)['macro_f1']
    thresholds = tune_thresholds(probs, truth)
    after = evaluation_report(predict_matrix(probs, thresholds), truth)['macro_f1']

    checkpoint.thresholds = thresholds
    save_checkpoint(checkpoint, checkpoint_path)
    return {'split': split, 'thresholds': thresholds.to_list(), 'macro_f1_before': before, 'macro_f1_after': after}


def _ensemble(checkpoint_paths: Sequence, ensemble_spec: Optional[str]):
    """Load members; returns (checkpoints, EnsembleSpec or None)"""
    if ensemble_spec:
        if checkpoint_paths:
            raise EnsembleException(f"give either an ensemble spec or checkpoints, not both "
                                    f"({len(checkpoint_paths)} checkpoint(s) with {ensemble_spec})")
        spec_path = Path(ensemble_spec)
        spec = EnsembleSpec.from_dict(_read_json(spec_path))
        paths = [spec_path.parent / member for member in spec.members]
        return [load_checkpoint(p) for p in paths], spec
    if len(checkpoint_paths) not in (1, 3):
        raise EnsembleException(f"evaluation takes 1 or 3 checkpoints, got {len(checkpoint_paths)}")
    checkpoints = [load_checkpoint(p) for p in checkpoint_paths]
    if len(checkpoints) == 1:
        return checkpoints, None
    scores = [c.validation_macro_f1 or 0.0 for c in checkpoints]
    return checkpoints, EnsembleSpec(members=[str(p) for p in checkpoint_paths], tie_breaker=best_member(scores))


def _predict(checkpoints: List[Checkpoint], spec: Optional[EnsembleSpec], items: Sequence, workers: int):
    """Final labels and, for a single model, its probability matrix"""
    member_probs = [_probabilities(c, items, workers) for c in checkpoints]
    member_preds = [predict_matrix(p, c.thresholds) for p, c in zip(member_probs, checkpoints)]
    if spec is None:
        return member_preds[0], member_probs[0]
    labels = np.array([hard_vote(votes, spec) for votes in zip(*member_preds)], dtype=np.int64)
    return labels, None


def cmd_eval(cfg: RunConfig, checkpoint_paths: Sequence, manifest, ensemble_spec: Optional[str] = None,
             split: str = 'all', out_dir=None, confusion_png=None) -> Dict:
    """Evaluate one model or a three-member hard-voting ensemble"""
    checkpoints, spec = _ensemble(checkpoint_paths, ensemble_spec)
    items = load_items(select_split(read_manifest(manifest), split, cfg.data.validation_fraction))
    preds, _ = _predict(checkpoints, spec, items, cfg.data.workers)
    report = evaluation_report(preds, [item.label for item in items])

    if out_dir is not None:
        _write_json(Path(out_dir) / 'eval_report.json', report)
    if confusion_png is not None:
        render_confusion(report['confusion_matrix'], confusion_png)
    logger.info(f"Evaluated {len(checkpoints)} model(s) on {report['num_samples']} utterances: "
                f"macro-F1 {report['macro_f1']:.4f}")
    return report


def cmd_predict(cfg: RunConfig, checkpoint_paths: Sequence, manifest, out_path,
                ensemble_spec: Optional[str] = None) -> Path:
    """Per-utterance JSON lines {id, label, emotion, probabilities}"""
    checkpoints, spec = _ensemble(checkpoint_paths, ensemble_spec)
    items = load_items(read_manifest(manifest))
    preds, probs = _predict(checkpoints, spec, items, cfg.data.workers)

    out_path = Path(out_path)
    try:
        out_path.parent.mkdir(parents=True, exist_ok=True)
        with open(out_path, 'w', encoding='utf-8') as f:
            for n, (item, label) in enumerate(zip(items, preds)):
                row = {'id': item.utterance_id, 'label': int(label), 'emotion': EMOTIONS[int(label)]}
                if probs is not None:
                    row['probabilities'] = [round(float(p), 6) for p in probs[n]]
                f.write(json.dumps(row) + '\n')
    except OSError as e:
        raise FormatException(f"cannot write predictions {out_path}: {e}") from e
    logger.info(f"Predictions for {len(items)} utterances written to {out_path}")
    return out_path


def cmd_gradcheck(cfg: RunConfig, seed: Optional[int] = None, force_dropout: bool = False) -> Dict:
    """Finite-difference check of both attention variants"""
    return run_gradcheck(seed=cfg.seed if seed is None else seed,
                         dropout=max(cfg.model.dropout, 0.1) if force_dropout else 0.0,
                         training=force_dropout)


def cmd_config(cfg: RunConfig) -> Dict:
    return cfg.to_dict()


def cmd_attention(cfg: RunConfig, checkpoint_path, manifest, utterance_id: str, out_dir) -> List[Path]:
    """Render the first attention layer's per-head weights for one utterance"""
    checkpoint = load_checkpoint(checkpoint_path)
    model = restore_model(checkpoint)
    if model.config.attention_variant is not AttentionVariant.STANDARD:
        raise ModelException("attention maps are only defined for the standard multi-head variant")

    entries = [e for e in read_manifest(manifest) if e.id == utterance_id]
    if not entries:
        raise FormatException(f"utterance '{utterance_id}' is not in {manifest}")
    item = load_items(entries)[0]
    acoustic, text = source_from_metadata(checkpoint.metadata).prepare(item, training=False)

    heads: List[np.ndarray] = []
    model.utterance_vector(acoustic, text, attention_sink=heads)
    return render_attention_maps(heads, acoustic.shape[1], out_dir, prefix=utterance_id)
