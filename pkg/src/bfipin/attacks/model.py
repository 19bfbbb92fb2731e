"""Trainable digit classifier with switchable domain adaptation.

Architecture: a stack of same-length 1-D convolutions over the keystroke
window, flattened into a latent embedding, followed by a 10-way digit head.
Optional domain heads sit on the embedding:

* ``dann``         discriminator behind a gradient-reversal layer
* ``mmd``          kernel MMD between each domain group and the rest of the batch
* ``contrastive``  supervised contrastive loss on digit labels

Task losses are combined with learnable uncertainty weights.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from threadpoolctl import threadpool_limits

from .. import learncore as lc
from ..learncore import Tensor
from ..trace import DomainKey
from .data import NO_NEIGHBOUR, SegmentSet
from .windtalker import AttackError

DA_METHODS = ("none", "dann", "mmd", "contrastive")
DOMAIN_DEFS = ("physical", "context", "both", "none")
N_CONTEXT_CLASSES = (NO_NEIGHBOUR + 1) ** 2

# independent RNG streams so optional parts never shift the others
STREAM_FEATURES, STREAM_DOMAIN, STREAM_DROPOUT, STREAM_SHUFFLE = 1, 2, 3, 4


@dataclass(frozen=True)
class ModelConfig:
    filters: tuple = (32, 64, 64)
    kernel: int = 5
    embedding: int = 64
    dropout: float = 0.1
    da_method: str = "none"
    domain_def: str = "physical"
    reference_domain: DomainKey = DomainKey()
    epochs: int = 30
    batch: int = 64
    seed: int = 0
    lr: float = 1e-3
    weight_decay: float = 1e-4
    patience: int = 8
    temperature: float = 0.1
    mmd_bandwidths: tuple = (0.01, 0.1, 1.0)
    domain_hidden: int = 32
    lambda_override: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "reference_domain", DomainKey(*self.reference_domain))
        object.__setattr__(self, "filters", tuple(self.filters))
        object.__setattr__(self, "mmd_bandwidths", tuple(self.mmd_bandwidths))
        self.validate()

    def validate(self):
        if self.da_method not in DA_METHODS:
            raise ValueError(f"da_method must be one of {DA_METHODS}")
        if self.domain_def not in DOMAIN_DEFS:
            raise ValueError(f"domain_def must be one of {DOMAIN_DEFS}")
        if self.da_method in ("dann", "mmd") and self.domain_def == "none":
            raise ValueError(f"da_method={self.da_method} needs a domain definition")
        if self.embedding < 10:
            raise ValueError("embedding width must be at least 10")
        if self.kernel % 2 == 0 or not self.filters:
            raise ValueError("need at least one conv block with an odd kernel")
        if not 0 <= self.dropout < 1:
            raise ValueError("dropout must lie in [0, 1)")

    @property
    def domain_heads(self) -> tuple:
        if self.da_method == "none" or self.domain_def == "none":
            return ()
        return ("physical", "context") if self.domain_def == "both" else (self.domain_def,)

    def to_json(self) -> dict:
        d = asdict(self)
        d["reference_domain"] = list(self.reference_domain)
        return d

    @classmethod
    def from_json(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        d["reference_domain"] = DomainKey(*d["reference_domain"])
        return cls(**d)


PRESETS = {
    "easy": ModelConfig(epochs=80, patience=20, batch=32),
    "default": ModelConfig(),
}


def preset(name: str, **overrides) -> ModelConfig:
    return replace(PRESETS[name], **overrides)


def domain_labels(name: str, data: SegmentSet, reference: DomainKey) -> np.ndarray:
    """Integer domain labels for one head."""
    if name == "physical":
        return np.array([int(tuple(d) == tuple(reference)) for d in data.domains], dtype=np.int64)
    if name == "context":
        return data.neighbours[:, 0] * (NO_NEIGHBOUR + 1) + data.neighbours[:, 1]
    raise ValueError(name)


def n_domain_classes(name: str) -> int:
    return 2 if name == "physical" else N_CONTEXT_CLASSES


class DigitNet(lc.Module):
    def __init__(self, n_features: int, length: int, config: ModelConfig):
        frng = np.random.default_rng([config.seed, STREAM_FEATURES])
        chans = (n_features,) + config.filters
        self.convs = [lc.Conv1d(a, b, config.kernel, frng) for a, b in zip(chans[:-1], chans[1:])]
        self.embed = lc.Dense(config.filters[-1] * length, config.embedding, frng)
        self.drop = lc.Dropout(config.dropout, np.random.default_rng([config.seed, STREAM_DROPOUT]))
        self.head = lc.Dense(config.embedding, 10, frng)
        self.head.w.data[:] = 0.0
        drng = np.random.default_rng([config.seed, STREAM_DOMAIN])
        self.domain = [_Head(lc.Dense(config.embedding, config.domain_hidden, drng),
                             lc.Dense(config.domain_hidden, n_domain_classes(h), drng))
                       for h in config.domain_heads]
        n_tasks = 1 + (len(config.domain_heads) if config.da_method in ("dann", "mmd") else 0) \
            + (1 if config.da_method == "contrastive" else 0)
        self.log_vars = Tensor(np.zeros(n_tasks), requires_grad=True)

    def embed_forward(self, x: np.ndarray) -> Tensor:
        h = Tensor(np.ascontiguousarray(x.transpose(0, 2, 1)))
        for conv in self.convs:
            h = conv(h).relu()
        return self.embed(h.reshape(len(x), -1)).relu()

    def __call__(self, x: np.ndarray):
        emb = self.embed_forward(x)
        return emb, self.head(self.drop(emb))


class _Head(lc.Module):
    def __init__(self, first: lc.Dense, second: lc.Dense):
        self.first, self.second = first, second

    def __call__(self, x: Tensor) -> Tensor:
        return self.second(self.first(x).relu())


@dataclass
class DigitClassifier:
    net: DigitNet
    config: ModelConfig
    mean: np.ndarray
    std: np.ndarray
    window: tuple  # (L, F)
    log: list = field(default_factory=list)

    def _standardize(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[1:] != self.window:
            raise AttackError("shape-mismatch", f"expected windows {self.window}, got {x.shape[1:]}")
        return (x - self.mean) / self.std

    def logits(self, x: np.ndarray, chunk: int = 256) -> np.ndarray:
        self.net.eval()
        xs = self._standardize(x)
        return np.concatenate([self.net(xs[i:i + chunk])[1].data for i in range(0, len(xs), chunk)])

    def predict_proba(self, x: np.ndarray) -> np.ndarray:
        """Digit distribution ``[n, 10]`` (dropout off, deterministic)."""
        return lc.softmax(self.logits(x))

    def embed(self, x: np.ndarray) -> np.ndarray:
        self.net.eval()
        return self.net.embed_forward(self._standardize(x)).data

    def arrays(self) -> dict:
        out = {name: p.data for name, p in self.net.named_parameters()}
        out["norm.mean"], out["norm.std"] = self.mean, self.std
        return out

    def save(self, path):
        state = {"config": self.config.to_json(), "window": list(self.window),
                 "log": json.loads(json.dumps(self.log))}
        lc.checkpoint.save(path, self.arrays(), state)

    @classmethod
    def load(cls, path) -> "DigitClassifier":
        arrays, state = lc.checkpoint.load(path)
        config = ModelConfig.from_json(state["config"])
        window = tuple(state["window"])
        net = DigitNet(window[1], window[0], config)
        for name, p in net.named_parameters():
            p.data[...] = arrays[name]
        return cls(net, config, arrays["norm.mean"], arrays["norm.std"], window, state["log"])


def _mmd_groups(emb: Tensor, labels: np.ndarray, bandwidths) -> Tensor | None:
    terms = []
    for g in np.unique(labels):
        inside = np.flatnonzero(labels == g)
        outside = np.flatnonzero(labels != g)
        if len(inside) and len(outside):
            terms.append(lc.mmd(emb[inside], emb[outside], bandwidths))
    if not terms:
        return None
    total = terms[0]
    for t in terms[1:]:
        total = total + t
    return total * (1.0 / len(terms))


def _batch_loss(net: DigitNet, config: ModelConfig, xb, yb, dom_labels, lam: float):
    emb, logits = net(xb)
    tasks = [(0, lc.cross_entropy(logits, yb))]
    parts = {"digit": tasks[0][1].item()}
    k = 1
    if config.da_method == "dann":
        rev = lc.grl(emb, lam)
        for head, (name, lab) in zip(net.domain, dom_labels.items()):
            loss = lc.cross_entropy(head(rev), lab)
            tasks.append((k, loss))
            parts[f"domain.{name}"] = loss.item()
            k += 1
    elif config.da_method == "mmd":
        for name, lab in dom_labels.items():
            loss = _mmd_groups(emb, lab, config.mmd_bandwidths)
            if loss is not None:
                tasks.append((k, loss))
                parts[f"domain.{name}"] = loss.item()
            k += 1
    elif config.da_method == "contrastive":
        try:
            loss = lc.supcon_loss(emb, yb, config.temperature)
            tasks.append((k, loss))
            parts["contrastive"] = loss.item()
        except ValueError:
            pass
    total = None
    for idx, loss in tasks:
        s = net.log_vars[idx]
        term = (-s).exp() * loss + s
        total = term if total is None else total + term
    return total, parts


def accuracy(clf: DigitClassifier, data: SegmentSet) -> float:
    return float(np.mean(clf.predict_proba(data.x).argmax(axis=1) == data.digits))


def model_train(train: SegmentSet, val: SegmentSet, config: ModelConfig = ModelConfig()):
    """Train a :class:`DigitClassifier` with early stopping on validation digit accuracy.

    Returns
    -------
    (DigitClassifier, list of dict)
        The classifier restored to its best validation epoch and the per-epoch log.
    """
    if len(train) == 0 or len(val) == 0:
        raise AttackError("empty-split", "training and validation sets must be non-empty")
    if config.domain_heads and any(d is None for d in train.domains):
        raise AttackError("missing-domain-labels", "domain adaptation needs domain labels")
    window = train.x.shape[1:]
    mean = train.x.reshape(-1, window[-1]).mean(axis=0)
    std = train.x.reshape(-1, window[-1]).std(axis=0)
    std = np.where(std > 1e-12, std, 1.0)
    net = DigitNet(window[-1], window[0], config)
    clf = DigitClassifier(net, config, mean, std, window)
    xs = clf._standardize(train.x)
    labels = {h: domain_labels(h, train, config.reference_domain) for h in config.domain_heads}
    params = net.parameters()
    opt = lc.AdamW(params, lr=config.lr, weight_decay=config.weight_decay)
    shuffle = np.random.default_rng([config.seed, STREAM_SHUFFLE])
    n = len(train)
    steps_per_epoch = -(-n // config.batch)
    total_steps = max(1, config.epochs * steps_per_epoch - 1)
    best, best_acc, stale, step = None, -1.0, 0, 0
    log = []
    with threadpool_limits(1):
        for epoch in range(config.epochs):
            net.train()
            perm = shuffle.permutation(n)
            sums: dict = {}
            for b in range(steps_per_epoch):
                idx = perm[b * config.batch:(b + 1) * config.batch]
                lam = config.lambda_override if config.lambda_override is not None \
                    else lc.grl_schedule(min(1.0, step / total_steps))
                opt.zero_grad()
                loss, parts = _batch_loss(net, config, xs[idx], train.digits[idx],
                                          {h: lab[idx] for h, lab in labels.items()}, lam)
                loss.backward()
                opt.step()
                step += 1
                parts["total"] = loss.item()
                for key, v in parts.items():
                    sums.setdefault(key, []).append(v)
            val_acc = accuracy(clf, val)
            entry = {"epoch": epoch, "lambda": lam, "val_acc": val_acc,
                     "log_vars": net.log_vars.data.tolist()}
            entry.update({key: float(np.mean(v)) for key, v in sums.items()})
            log.append(entry)
            if val_acc > best_acc:
                best_acc, stale = val_acc, 0
                best = [p.data.copy() for p in params]
            else:
                stale += 1
                if stale >= config.patience:
                    break
    for p, saved in zip(params, best):
        p.data[...] = saved
    clf.log = log
    net.eval()
    return clf, log


def untrained(n_features: int, length: int, config: ModelConfig = ModelConfig()) -> DigitClassifier:
    """Fresh classifier with identity standardization (zero digit head, uniform output)."""
    return DigitClassifier(DigitNet(n_features, length, config), config,
                           np.zeros(n_features), np.ones(n_features), (length, n_features))


def discriminator_loss(clf: DigitClassifier, data: SegmentSet, head: int = 0) -> float:
    """Mean cross-entropy of domain head ``head`` on ``data`` (eval mode)."""
    name = clf.config.domain_heads[head]
    labels = domain_labels(name, data, clf.config.reference_domain)
    clf.net.eval()
    emb = clf.net.embed_forward(clf._standardize(data.x))
    return lc.cross_entropy(clf.net.domain[head](emb), labels).item()
