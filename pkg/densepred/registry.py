from dataclasses import dataclass, field
from typing import Any, Dict, Generic, List, Optional

import logging
import threading
import warnings

from .errors import NotRegisteredError
from .project_types import T


@dataclass
class Entry(Generic[T]):
    """Describes one registered value."""

    name: str
    value: T
    metadata: Dict[str, Any] = field(default_factory=dict)


class Registry(Generic[T]):
    """A named, thread-safe registry of values.

    Task presets and the gradient-check suite are looked up by name from
    registries.

    Attributes:
        name: Registry name, used in error messages and logs.
        _entries: Registered entries keyed by name, in registration order.
        _lock: Lock guarding registration and lookup.
        _logger: Logger for registry events.
    """

    def __init__(self, name: str):
        self.name = name
        self._entries: Dict[str, Entry[T]] = {}
        self._lock = threading.RLock()
        self._logger = logging.getLogger("DensePred.Registry")

    def add(self, name: str, value: T, **metadata: Any) -> "Registry[T]":
        """Register ``value`` under ``name``.

        Args:
            name: Lookup key.
            value: The value to register.
            **metadata: Free-form data stored alongside the entry.

        Returns:
            Registry: The registry, for chaining.

        Side Effects:
            Issues a warning when an existing entry is overwritten.
        """
        with self._lock:
            if name in self._entries:
                warnings.warn(
                    f"'{name}' is already registered in '{self.name}'. Overwriting."
                )
            self._entries[name] = Entry(name=name, value=value, metadata=dict(metadata))
            self._logger.debug("Registered '%s' in '%s'", name, self.name)
        return self

    def _entry(self, name: str) -> Entry[T]:
        with self._lock:
            entry = self._entries.get(name)
        if entry is None:
            known = ", ".join(self.names()) or "<empty>"
            raise NotRegisteredError(
                f"No registration found (known: {known})",
                name=name,
                registry=self.name,
            )
        return entry

    def resolve(self, name: str) -> T:
        """Return the value registered under ``name``.

        Raises:
            NotRegisteredError: If nothing is registered under ``name``.
        """
        return self._entry(name).value

    def metadata(self, name: str) -> Dict[str, Any]:
        """Metadata stored with ``name`` (empty dict if none)."""
        return self._entry(name).metadata

    def names(self) -> List[str]:
        """Registered names in registration order."""
        with self._lock:
            return list(self._entries)

    def child(self, name: Optional[str] = None) -> "Registry[T]":
        """Create a registry pre-populated with this registry's entries.

        Registrations on the child do not affect the parent, which lets tests
        extend a suite (for example with a deliberately broken case) without
        touching the shared instance.
        """
        child: Registry[T] = Registry(name or f"{self.name}.child")
        with self._lock:
            for key, entry in self._entries.items():
                child._entries[key] = Entry(entry.name, entry.value, dict(entry.metadata))
        return child

    def __contains__(self, name: str) -> bool:
        return name in self._entries
