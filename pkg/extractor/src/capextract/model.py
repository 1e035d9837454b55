"""Compact attention captioner backing the extraction pipeline.

A small residual CNN with named stages (``conv1``, ``block1`` ..
``block4``) encodes an image into a spatial grid of annotation vectors;
an attention LSTM decodes a caption over a fixed vocabulary, emitting
one 512-D hidden state per generated word. Checkpoints are created
locally from a seed, loaded strictly, and fingerprinted by SHA-256 so
every extracted file stays attributable to exact weights.

Decoding is deterministic: greedy search takes argmax at every step and
beam search breaks ties by candidate arrival order, so equal inputs
always produce equal tokens and bitwise-equal states.
"""

from __future__ import annotations

import hashlib
from dataclasses import asdict, dataclass

import numpy as np
import torch
from torch import nn
from torch.nn import functional as F

from .errors import CheckpointError, ValidationError

CHECKPOINT_FORMAT = "capextract-checkpoint"
CHECKPOINT_VERSION = 1

LAYER_NAMES = ("conv1", "block1", "block2", "block3", "block4")

PAD, START, END, UNK = "<pad>", "<start>", "<end>", "<unk>"
SPECIAL_TOKENS = (PAD, START, END, UNK)

WORDS = (
    "man", "woman", "child", "dog", "cat", "bird", "horse", "people",
    "crowd", "face", "tree", "grass", "flower", "mountain", "river",
    "lake", "ocean", "sky", "cloud", "sun", "street", "car", "bus",
    "train", "bicycle", "road", "bridge", "building", "house", "window",
    "door", "table", "chair", "room", "kitchen", "food", "plate", "cup",
    "bottle", "book", "ball", "boat", "beach", "sand", "rock", "snow",
    "field", "park", "garden", "wall", "red", "green", "blue", "white",
    "black", "small", "large", "old", "young", "bright", "standing",
    "sitting", "walking", "running", "holding", "wearing", "near",
    "under", "over", "beside",
)


@dataclass(frozen=True)
class ModelConfig:
    """Dimensions shared by the encoder, the decoder, and extraction."""

    image_size: int = 64
    state_dim: int = 512
    embed_dim: int = 64
    attention_dim: int = 128


class Vocabulary:
    """Token list with the special markers at fixed leading positions."""

    def __init__(self, words=WORDS):
        self.tokens = list(SPECIAL_TOKENS) + list(words)
        if len(set(self.tokens)) != len(self.tokens):
            raise ValidationError("vocabulary holds duplicate tokens")
        if not all(isinstance(t, str) and t for t in self.tokens):
            raise ValidationError("vocabulary tokens must be non-empty strings")
        self._index = {t: i for i, t in enumerate(self.tokens)}
        self.pad = self._index[PAD]
        self.start = self._index[START]
        self.end = self._index[END]
        self.unk = self._index[UNK]

    def __len__(self) -> int:
        return len(self.tokens)

    def token(self, index: int) -> str:
        return self.tokens[index]


class _ResidualBlock(nn.Module):
    """Two 3x3 convolutions with a projected skip connection."""

    def __init__(self, c_in: int, c_out: int, stride: int):
        super().__init__()
        self.conv1 = nn.Conv2d(c_in, c_out, 3, stride=stride, padding=1, bias=False)
        self.norm1 = nn.GroupNorm(4, c_out)
        self.conv2 = nn.Conv2d(c_out, c_out, 3, padding=1, bias=False)
        self.norm2 = nn.GroupNorm(4, c_out)
        if stride != 1 or c_in != c_out:
            self.skip = nn.Conv2d(c_in, c_out, 1, stride=stride, bias=False)
        else:
            self.skip = nn.Identity()

    def forward(self, x):
        out = F.relu(self.norm1(self.conv1(x)))
        out = self.norm2(self.conv2(out))
        return F.relu(out + self.skip(x))


class Encoder(nn.Module):
    """Residual image encoder exposing every named stage output."""

    channels = (16, 16, 32, 64, 128)

    def __init__(self):
        super().__init__()
        c = self.channels
        self.conv1 = nn.Sequential(
            nn.Conv2d(3, c[0], 3, stride=2, padding=1, bias=False),
            nn.GroupNorm(4, c[0]),
            nn.ReLU(),
        )
        self.block1 = _ResidualBlock(c[0], c[1], stride=1)
        self.block2 = _ResidualBlock(c[1], c[2], stride=2)
        self.block3 = _ResidualBlock(c[2], c[3], stride=2)
        self.block4 = _ResidualBlock(c[3], c[4], stride=2)

    @property
    def annotation_dim(self) -> int:
        return self.channels[-1]

    def stage_outputs(self, images) -> dict:
        """Mapping of stage name to activation, in encoder depth order."""
        out = {}
        x = images
        for name in LAYER_NAMES:
            x = getattr(self, name)(x)
            out[name] = x
        return out

    def forward(self, images):
        """Annotation grid (batch, positions, channels) for the decoder."""
        final = self.stage_outputs(images)[LAYER_NAMES[-1]]
        return final.flatten(2).transpose(1, 2)


class Decoder(nn.Module):
    """Attention LSTM emitting one hidden state per generated token."""

    def __init__(self, vocab_size: int, config: ModelConfig, annotation_dim: int):
        super().__init__()
        self.embed = nn.Embedding(vocab_size, config.embed_dim)
        self.init_h = nn.Linear(annotation_dim, config.state_dim)
        self.init_c = nn.Linear(annotation_dim, config.state_dim)
        self.att_annotation = nn.Linear(annotation_dim, config.attention_dim)
        self.att_state = nn.Linear(config.state_dim, config.attention_dim)
        self.att_score = nn.Linear(config.attention_dim, 1)
        self.cell = nn.LSTMCell(config.embed_dim + annotation_dim, config.state_dim)
        self.output = nn.Linear(config.state_dim, vocab_size)

    def initial_state(self, annotations):
        mean = annotations.mean(dim=1)
        return torch.tanh(self.init_h(mean)), torch.tanh(self.init_c(mean))

    def attend(self, state, annotations):
        scores = self.att_score(
            torch.tanh(
                self.att_annotation(annotations) + self.att_state(state).unsqueeze(1)
            )
        ).squeeze(2)
        weights = torch.softmax(scores, dim=1)
        return (weights.unsqueeze(2) * annotations).sum(dim=1)

    def step(self, token, state, annotations):
        h, c = state
        context = self.attend(h, annotations)
        h, c = self.cell(torch.cat([self.embed(token), context], dim=1), (h, c))
        return (h, c), self.output(h)


def _mask_specials(logits, vocabulary: Vocabulary, *, allow_end: bool):
    # Captions never surface pad/start/unk, and the first step may not
    # end the caption, so every decoded sequence holds at least one word.
    masked = logits.clone()
    masked[:, vocabulary.pad] = float("-inf")
    masked[:, vocabulary.start] = float("-inf")
    masked[:, vocabulary.unk] = float("-inf")
    if not allow_end:
        masked[:, vocabulary.end] = float("-inf")
    return masked


def _state_row(state) -> np.ndarray:
    return state[0].squeeze(0).numpy().astype(np.float32, copy=True)


@dataclass
class _Beam:
    """One beam-search hypothesis and the decoder state that produced it."""

    score: float
    tokens: tuple
    states: tuple
    state: tuple
    last: int


class CaptionModel(nn.Module):
    """Encoder/decoder pair plus the two decoding strategies.

    Both decoders return ``(tokens, states)`` where row ``i`` of the
    float32 state matrix is the hidden state that produced token ``i``.
    The initial state and the end-token step are never recorded, so the
    token count equals the state-row count by construction.
    """

    def __init__(self, vocabulary: Vocabulary | None = None, config: ModelConfig | None = None):
        super().__init__()
        self.vocabulary = vocabulary if vocabulary is not None else Vocabulary()
        self.config = config if config is not None else ModelConfig()
        self.encoder = Encoder()
        self.decoder = Decoder(len(self.vocabulary), self.config, self.encoder.annotation_dim)

    @torch.no_grad()
    def decode_greedy(self, image, max_tokens: int = 16):
        """Argmax decoding; equal inputs give bitwise-equal outputs."""
        if max_tokens < 1:
            raise ValidationError(f"max_tokens must be at least 1, got {max_tokens}")
        vocab = self.vocabulary
        annotations = self.encoder(image)
        state = self.decoder.initial_state(annotations)
        token = torch.tensor([vocab.start])
        tokens, rows = [], []
        for step in range(max_tokens):
            state, logits = self.decoder.step(token, state, annotations)
            logits = _mask_specials(logits, vocab, allow_end=step > 0)
            index = int(torch.argmax(logits, dim=1))
            if index == vocab.end:
                break
            tokens.append(vocab.token(index))
            rows.append(_state_row(state))
            token = torch.tensor([index])
        return tokens, np.vstack(rows)

    @torch.no_grad()
    def decode_beam(self, image, max_tokens: int = 16, beam_width: int = 3):
        """Beam search scored by mean token log-probability.

        Candidate ordering is total: ties in score resolve by beam then
        token index, so repeated runs stay reproducible.
        """
        if max_tokens < 1:
            raise ValidationError(f"max_tokens must be at least 1, got {max_tokens}")
        if beam_width < 1:
            raise ValidationError(f"beam width must be at least 1, got {beam_width}")
        vocab = self.vocabulary
        annotations = self.encoder(image)
        start = self.decoder.initial_state(annotations)
        beams = [_Beam(0.0, (), (), start, vocab.start)]
        finished = []
        for step in range(max_tokens):
            candidates = []
            for beam in beams:
                state, logits = self.decoder.step(
                    torch.tensor([beam.last]), beam.state, annotations
                )
                logits = _mask_specials(logits, vocab, allow_end=step > 0)
                logprobs = torch.log_softmax(logits, dim=1).squeeze(0)
                values, indices = torch.topk(logprobs, min(beam_width + 1, len(vocab)))
                row = _state_row(state)
                for value, index in zip(values.tolist(), indices.tolist()):
                    if value == float("-inf"):
                        continue
                    if index == vocab.end:
                        finished.append(
                            _Beam(beam.score + value, beam.tokens, beam.states, state, index)
                        )
                        continue
                    candidates.append(
                        _Beam(
                            beam.score + value,
                            beam.tokens + (vocab.token(index),),
                            beam.states + (row,),
                            state,
                            index,
                        )
                    )
            if not candidates:
                break
            candidates.sort(key=lambda b: -b.score)
            beams = candidates[:beam_width]
        finished.extend(beams)
        best = max(finished, key=lambda b: b.score / len(b.tokens))
        return list(best.tokens), np.vstack(best.states)


def init_model(seed: int = 0) -> CaptionModel:
    """Freshly initialized captioner; one seed gives one set of weights."""
    if isinstance(seed, bool) or not isinstance(seed, int):
        raise ValidationError(f"seed must be an integer, got {seed!r}")
    torch.manual_seed(seed)
    model = CaptionModel()
    model.eval()
    return model


def save_checkpoint(model: CaptionModel, path) -> None:
    """Write the weights, vocabulary, and dimensions as one document."""
    document = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "config": asdict(model.config),
        "vocabulary": list(model.vocabulary.tokens),
        "state": model.state_dict(),
    }
    torch.save(document, path)


def load_checkpoint(path) -> CaptionModel:
    """Rebuild a captioner from a checkpoint, validating strictly."""
    try:
        document = torch.load(path, map_location="cpu", weights_only=True)
    except FileNotFoundError:
        raise
    except Exception as exc:
        raise CheckpointError(f"unreadable checkpoint {path}: {exc}") from exc
    if not isinstance(document, dict) or document.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(f"{path} is not a captioner checkpoint")
    if document.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"checkpoint version {document.get('version')!r} is not "
            f"{CHECKPOINT_VERSION}"
        )
    tokens = document.get("vocabulary")
    if not isinstance(tokens, list) or tuple(tokens[:4]) != SPECIAL_TOKENS:
        raise CheckpointError("checkpoint vocabulary is missing the special tokens")
    try:
        config = ModelConfig(**document["config"])
        model = CaptionModel(Vocabulary(tokens[4:]), config)
        model.load_state_dict(document["state"], strict=True)
    except (KeyError, TypeError, ValueError, RuntimeError) as exc:
        raise CheckpointError(f"checkpoint does not match the captioner: {exc}") from exc
    model.eval()
    return model


def checkpoint_sha256(path) -> str:
    """Hex digest of the checkpoint file, recorded in every run report."""
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()
