class DensePredError(Exception):
    """Base class for every error raised by the densepred library.

    Catching this type is enough to separate library failures from programming
    errors in calling code. The command-line entry point maps each subclass to
    a documented exit code.
    """

    pass


class ConfigurationError(DensePredError):
    """Raised when a model, layer or run configuration is inconsistent.

    Typical causes are a spatial plan that collapses to zero pixels, a channel
    count that does not match the layer that consumes it, or an unknown key in
    a configuration file.

    Attributes:
        layer: Name of the offending layer or configuration key, if known.
    """

    def __init__(self, message, layer=None):
        """Initialize a new ConfigurationError.

        Args:
            message: The base error message.
            layer: The layer (or configuration key) the error refers to.
        """
        self.layer = layer

        detailed_message = message
        if layer:
            detailed_message += f"\nLayer: '{layer}'"

        super().__init__(detailed_message)


class InputError(DensePredError):
    """Raised when runtime inputs violate an operation's preconditions.

    Examples include an empty validity mask, a nonpositive depth at a valid
    pixel, a label outside the class range, a missing input modality or a crop
    rectangle that leaves the feature plane.

    Attributes:
        field: Name of the offending input, if known.
    """

    def __init__(self, message, field=None):
        self.field = field

        detailed_message = message
        if field:
            detailed_message += f"\nField: '{field}'"

        super().__init__(detailed_message)


class FormatError(DensePredError):
    """Raised when a file does not follow the format it claims.

    Used by the tensor container, the portable pixmap/graymap codecs, the
    checkpoint container and the plain-text configuration parser.

    Attributes:
        path: The file being read, if known.
        offset: Byte offset (or line number for text files) of the problem.
    """

    def __init__(self, message, path=None, offset=None):
        self.path = path
        self.offset = offset

        detailed_message = message
        if path:
            detailed_message += f"\nPath: '{path}'"
        if offset is not None:
            detailed_message += f"\nOffset: {offset}"

        super().__init__(detailed_message)


class TrainingError(DensePredError):
    """Raised when optimisation cannot continue.

    The optimizer refuses non-finite gradients and the training loop refuses
    non-finite losses; the message names the layer and step involved.

    Attributes:
        layer: Parameter whose gradient was non-finite, if applicable.
        step: Training step at which the failure happened.
    """

    def __init__(self, message, layer=None, step=None):
        self.layer = layer
        self.step = step

        detailed_message = message
        if layer:
            detailed_message += f"\nLayer: '{layer}'"
        if step is not None:
            detailed_message += f"\nStep: {step}"

        super().__init__(detailed_message)


class NotRegisteredError(DensePredError):
    """Raised when a name cannot be resolved from a registry.

    Attributes:
        name: The name that was looked up.
        registry: Name of the registry that was searched.
    """

    def __init__(self, message, name=None, registry=None):
        self.name = name
        self.registry = registry

        detailed_message = message
        if name:
            detailed_message += f"\nName: '{name}'"
        if registry:
            detailed_message += f"\nRegistry: '{registry}'"

        super().__init__(detailed_message)
