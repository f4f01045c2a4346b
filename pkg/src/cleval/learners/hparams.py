"""Mapping from hyperparameter-space entry names to learner constructor
arguments.

Space entries may use the human table spellings ("LR Scheduler",
"T (KD)", "λ (Aux)", ...) or the snake_case names directly. Entries a
given algorithm does not consume are inert: they stay in the sampled
assignment and the run record, but never reach the learner.
"""

from __future__ import annotations

from ..errors import ConfigurationError

# canonical kwarg -> accepted space spellings
ALIASES: dict[str, tuple[str, ...]] = {
    "epochs": ("epochs", "Epoch", "Epochs"),
    "lr": ("lr", "LR"),
    "num_milestones": ("num_milestones", "Num milestones"),
    "lr_decay": ("lr_decay", "LR decay"),
    "batch_size": ("batch_size", "Batch size"),
    "weight_decay": ("weight_decay", "Weight decay", "Weigh decay"),
    "scheduler": ("scheduler", "LR Scheduler"),
    "kd_temperature": ("kd_temperature", "T (KD)"),
    "kd_lambda": ("kd_lambda", "λ (KD)", "lambda (KD)"),
    "split_ratio": ("split_ratio", "Split ratio"),
    "aux_lambda": ("aux_lambda", "λ (Aux)", "lambda (Aux)"),
    "exemplar_batch_size": ("exemplar_batch_size", "Exemplar batch size"),
}

_INT_KWARGS = {"epochs", "num_milestones", "batch_size", "exemplar_batch_size"}

COMMON = ("epochs", "lr", "scheduler", "lr_decay", "batch_size", "weight_decay")
KD = ("kd_temperature", "kd_lambda")

REQUIRED: dict[str, tuple[str, ...]] = {
    "finetune": COMMON,
    "replay": COMMON,
    "icarl": COMMON + KD,
    "wa": COMMON + KD,
    "bic": COMMON + KD + ("split_ratio",),
    "der": COMMON + ("aux_lambda",),
}

OPTIONAL = ("num_milestones", "exemplar_batch_size")


def resolve_hyperparams(algorithm: str, assignment: dict) -> dict:
    """Learner constructor kwargs for the algorithm's slice of a sampled
    assignment. Missing required names raise ConfigurationError; unknown
    names are ignored."""
    if algorithm not in REQUIRED:
        raise ConfigurationError(f"unknown algorithm '{algorithm}'")
    found: dict[str, object] = {}
    for kwarg, spellings in ALIASES.items():
        for name in spellings:
            if name in assignment:
                found[kwarg] = assignment[name]
                break

    missing = [k for k in REQUIRED[algorithm] if k not in found]
    if missing:
        raise ConfigurationError(
            f"assignment lacks hyperparameters {missing} required by '{algorithm}'"
        )
    kwargs = {k: found[k] for k in REQUIRED[algorithm]}
    for k in OPTIONAL:
        if k in found:
            kwargs[k] = found[k]

    scheduler = {"StepLR": "step", "Cosine": "cosine"}.get(
        str(kwargs["scheduler"]), str(kwargs["scheduler"])
    )
    if scheduler not in ("step", "cosine"):
        raise ConfigurationError(f"unknown scheduler value '{kwargs['scheduler']}'")
    kwargs["scheduler"] = scheduler
    if scheduler == "step" and "num_milestones" not in kwargs:
        raise ConfigurationError(
            "StepLR sampled but the assignment has no milestone count"
        )
    for k in list(kwargs):
        if k in _INT_KWARGS and kwargs[k] is not None:
            kwargs[k] = int(kwargs[k])
    return kwargs
