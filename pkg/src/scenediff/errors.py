"""Exception types shared across the library."""


class SceneDiffError(Exception):
    """Base class for all scenediff errors."""


class VocabularyError(SceneDiffError):
    """A category, relation, or style token is outside the configured vocabulary."""


class InstructionParseError(SceneDiffError):
    """Instruction text does not match the template grammar."""


class UnsatisfiableInstructionError(SceneDiffError):
    """No dataset graph survives the instruction filter.

    ``stage`` names the first filter stage that emptied the candidate set,
    one of ``"triplets"``, ``"style"``, or ``"combined"``.
    """

    def __init__(self, message: str, stage: str = "combined"):
        super().__init__(message)
        self.stage = stage
