"""Exception hierarchy shared across the toolkit.

InputError covers bad user input (files, configs, arguments) and maps to
exit code 2 in the CLI; NumericalError covers runtime numeric failures
(divergence, non-finite fields) and maps to exit code 1.
"""


class ForgeError(Exception):
    pass


class InputError(ForgeError):
    pass


class ConfigError(InputError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class NonWatertightMeshError(InputError):
    pass


class NumericalError(ForgeError):
    pass


class TrainingDiverged(NumericalError):
    def __init__(self, epoch, shape_id):
        self.epoch = epoch
        self.shape_id = shape_id
        super().__init__(
            f"non-finite loss at epoch {epoch} on shape {shape_id!r}"
        )
