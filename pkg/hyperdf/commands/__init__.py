from . import ablate, evaluate, pair_exp, preprocess, report, train, years

COMMANDS = (preprocess, train, evaluate, ablate, pair_exp, years, report)

__all__ = ["COMMANDS"]
