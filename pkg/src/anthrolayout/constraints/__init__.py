from .program import (
    CompileConfig,
    ConstraintProgram,
    Evaluation,
    PenaltyTerm,
    TermKind,
    adaptive_weights,
    compile_program,
    dump_program,
    eval_program,
    load_program,
)

__all__ = [
    "CompileConfig",
    "ConstraintProgram",
    "Evaluation",
    "PenaltyTerm",
    "TermKind",
    "adaptive_weights",
    "compile_program",
    "dump_program",
    "eval_program",
    "load_program",
]
