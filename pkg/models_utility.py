import logging
from dataclasses import dataclass
from enum import Enum
from typing import Dict, Union

import numpy as np
from scipy.special import expit

from errors import InapplicableError, InvalidInputError

NEG_INF = float("-inf")
POS_INF = float("inf")

ArrayLike = Union[float, np.ndarray]


class UtilityFamily(Enum):
    POWER = "power"
    NEG_POWER = "negpow"
    LOG = "log"
    LOG_SIGMOID = "logsigmoid"
    LINEAR = "linear"


class Extension(Enum):
    NONE = "none"
    APPENDIX_A = "appendixA"


@dataclass(frozen=True)
class UtilitySpec:
    """
    Utility U applied to reward differences.

    power       x^gamma on [0,1], odd continuation -|x|^gamma below 0
    negpow      -x^-gamma (gamma=0 means log x), -inf at x <= 0
    log         log x, -inf at x <= 0
    logsigmoid  log sigmoid(x / sigma)
    linear      x

    With extension=APPENDIX_A the singular families are shifted by epsilon
    for x > 0 and continued linearly (slope 1) for x <= 0.
    """
    family: UtilityFamily
    gamma: float = 0.5
    sigma: float = 1.0
    epsilon: float = 0.1
    extension: Extension = Extension.NONE

    def __post_init__(self):
        if not isinstance(self.family, UtilityFamily):
            raise InvalidInputError(f"Unknown utility family: {self.family!r}")
        if not isinstance(self.extension, Extension):
            raise InvalidInputError(f"Unknown extension: {self.extension!r}")
        if not np.isfinite(self.epsilon) or self.epsilon <= 0:
            raise InvalidInputError(f"epsilon must be > 0, got {self.epsilon}")
        if self.family is UtilityFamily.POWER:
            if not 0 < self.gamma < 1:
                raise InvalidInputError(f"power utility needs 0 < gamma < 1, got {self.gamma}")
            if self.extension is not Extension.NONE:
                raise InvalidInputError("power utility has no AppendixA extension")
        elif self.family is UtilityFamily.NEG_POWER:
            if not 0 <= self.gamma <= 1:
                raise InvalidInputError(f"negpow utility needs 0 <= gamma <= 1, got {self.gamma}")
        elif self.family is UtilityFamily.LOG_SIGMOID:
            if not np.isfinite(self.sigma) or self.sigma <= 0:
                raise InvalidInputError(f"logsigmoid utility needs sigma > 0, got {self.sigma}")

    # Constructors

    @classmethod
    def power(cls, gamma: float) -> "UtilitySpec":
        """x^gamma with 0 < gamma < 1"""
        return cls(UtilityFamily.POWER, gamma=gamma)

    @classmethod
    def neg_power(cls, gamma: float, extended: bool = False,
                  epsilon: float = 0.1) -> "UtilitySpec":
        """-x^-gamma (log x at gamma=0); extended=True shifts by epsilon and continues linearly"""
        ext = Extension.APPENDIX_A if extended else Extension.NONE
        return cls(UtilityFamily.NEG_POWER, gamma=gamma, epsilon=epsilon, extension=ext)

    @classmethod
    def log(cls, extended: bool = False, epsilon: float = 0.1) -> "UtilitySpec":
        """log x, optionally with the same epsilon continuation"""
        ext = Extension.APPENDIX_A if extended else Extension.NONE
        return cls(UtilityFamily.LOG, epsilon=epsilon, extension=ext)

    @classmethod
    def log_sigmoid(cls, sigma: float = 1.0) -> "UtilitySpec":
        """log sigmoid(x / sigma)"""
        return cls(UtilityFamily.LOG_SIGMOID, sigma=sigma)

    @classmethod
    def linear(cls) -> "UtilitySpec":
        return cls(UtilityFamily.LINEAR)

    # Properties

    @property
    def is_log_like(self) -> bool:
        """log x, either directly or as the gamma=0 member of negpow"""
        return (self.family is UtilityFamily.LOG
                or (self.family is UtilityFamily.NEG_POWER and self.gamma == 0))

    @property
    def is_extended(self) -> bool:
        """True when the AppendixA continuation changes U near 0"""
        return (self.extension is Extension.APPENDIX_A
                and self.family in (UtilityFamily.LOG, UtilityFamily.NEG_POWER))

    @property
    def is_singular(self) -> bool:
        """U(0) = -inf"""
        return (self.family in (UtilityFamily.LOG, UtilityFamily.NEG_POWER)
                and not self.is_extended)

    @property
    def is_strictly_concave(self) -> bool:
        """Strictly concave for x > 0"""
        return self.family is not UtilityFamily.LINEAR

    @property
    def has_infinite_slope_at_zero(self) -> bool:
        """U'(0+) = inf: power and the singular families"""
        return self.family is UtilityFamily.POWER or self.is_singular

    @property
    def is_concave_on_reals(self) -> bool:
        """
        Concave on all of [-1, 1], not only for x > 0. The odd power
        continuation is convex below 0, and the linear continuation has a
        convex kink at 0 whenever U'(0+) exceeds its left slope of 1.
        """
        if self.family is UtilityFamily.POWER:
            return False
        return not self.is_extended or self.deriv(0.0) <= 1.0

    @property
    def is_finite_everywhere(self) -> bool:
        """Finite on all of [-1, 1]"""
        return not self.is_singular

    # Evaluation

    def eval(self, x: ArrayLike) -> ArrayLike:
        """U(x); -inf sentinel for singular families at x <= 0"""
        arr = np.asarray(x, dtype=float)
        out = self._eval_array(np.atleast_1d(arr))
        return float(out[0]) if arr.ndim == 0 else out.reshape(arr.shape)

    def deriv(self, x: ArrayLike) -> ArrayLike:
        """U'(x); at x = 0 the right derivative, +inf sentinel where U'(0+) is infinite"""
        arr = np.asarray(x, dtype=float)
        out = self._deriv_array(np.atleast_1d(arr))
        return float(out[0]) if arr.ndim == 0 else out.reshape(arr.shape)

    def second_deriv(self, x: ArrayLike) -> ArrayLike:
        """U''(x); at x = 0 the right limit"""
        arr = np.asarray(x, dtype=float)
        out = self._second_deriv_array(np.atleast_1d(arr))
        return float(out[0]) if arr.ndim == 0 else out.reshape(arr.shape)

    def kappa(self) -> float:
        """U'(0) / U'(1), the ratio behind the endpoint mass bound"""
        d0 = self.deriv(0.0)
        d1 = self.deriv(1.0)
        if not np.isfinite(d0):
            raise InapplicableError(
                f"mass bound inapplicable: U'(0) is infinite for {self.to_string()}")
        if d1 <= 0:
            raise InapplicableError(
                f"mass bound inapplicable: U'(1) = {d1} for {self.to_string()}")
        return d0 / d1

    def _eval_array(self, x: np.ndarray) -> np.ndarray:
        if self.family is UtilityFamily.LINEAR:
            return x.copy()
        if self.family is UtilityFamily.LOG_SIGMOID:
            # log sigmoid(z) = -softplus(-z)
            return -np.logaddexp(0.0, -x / self.sigma)
        if self.family is UtilityFamily.POWER:
            return np.sign(x) * np.abs(x) ** self.gamma

        out = np.full(x.shape, NEG_INF)
        pos = x > 0
        if self.is_extended:
            shifted = x[pos] + self.epsilon
            if self.is_log_like:
                out[pos] = np.log(shifted)
                out[~pos] = x[~pos] + np.log(self.epsilon)
            else:
                out[pos] = -shifted ** (-self.gamma)
                out[~pos] = x[~pos] - self.epsilon ** (-self.gamma)
        else:
            if self.is_log_like:
                out[pos] = np.log(x[pos])
            else:
                out[pos] = -x[pos] ** (-self.gamma)
        return out

    def _deriv_array(self, x: np.ndarray) -> np.ndarray:
        if self.family is UtilityFamily.LINEAR:
            return np.ones_like(x)
        if self.family is UtilityFamily.LOG_SIGMOID:
            return expit(-x / self.sigma) / self.sigma
        if self.family is UtilityFamily.POWER:
            out = np.full(x.shape, POS_INF)
            nonzero = x != 0
            out[nonzero] = self.gamma * np.abs(x[nonzero]) ** (self.gamma - 1.0)
            return out

        if self.is_extended:
            out = np.ones_like(x)
            right = x >= 0
            shifted = x[right] + self.epsilon
        else:
            out = np.full(x.shape, POS_INF)
            right = x > 0
            shifted = x[right]
        if self.is_log_like:
            out[right] = 1.0 / shifted
        else:
            out[right] = self.gamma * shifted ** (-self.gamma - 1.0)
        return out

    def _second_deriv_array(self, x: np.ndarray) -> np.ndarray:
        if self.family is UtilityFamily.LINEAR:
            return np.zeros_like(x)
        if self.family is UtilityFamily.LOG_SIGMOID:
            z = x / self.sigma
            return -expit(z) * expit(-z) / self.sigma ** 2
        if self.family is UtilityFamily.POWER:
            out = np.full(x.shape, NEG_INF)
            nonzero = x != 0
            ax = np.abs(x[nonzero])
            out[nonzero] = np.sign(x[nonzero]) * self.gamma * (self.gamma - 1.0) * ax ** (self.gamma - 2.0)
            return out

        if self.is_extended:
            out = np.zeros_like(x)
            right = x >= 0
            shifted = x[right] + self.epsilon
        else:
            out = np.full(x.shape, NEG_INF)
            right = x > 0
            shifted = x[right]
        if self.is_log_like:
            out[right] = -1.0 / shifted ** 2
        else:
            out[right] = -self.gamma * (self.gamma + 1.0) * shifted ** (-self.gamma - 2.0)
        return out

    # Text form

    def to_string(self) -> str:
        """Canonical spec string accepted by parse_utility"""
        if self.family is UtilityFamily.POWER:
            return f"power:gamma={self.gamma!r}"
        if self.family is UtilityFamily.LOG_SIGMOID:
            return f"logsigmoid:sigma={self.sigma!r}"
        if self.family is UtilityFamily.LINEAR:
            return "linear"
        params = []
        if self.family is UtilityFamily.NEG_POWER:
            params.append(f"gamma={self.gamma!r}")
        if self.extension is Extension.APPENDIX_A:
            params.append(f"eps={self.epsilon!r}")
            params.append("ext=appendixA")
        head = self.family.value
        return f"{head}:{','.join(params)}" if params else head

    def __str__(self) -> str:
        return self.to_string()


_FAMILY_ALIASES = {
    "power": UtilityFamily.POWER,
    "pow": UtilityFamily.POWER,
    "negpow": UtilityFamily.NEG_POWER,
    "negpower": UtilityFamily.NEG_POWER,
    "log": UtilityFamily.LOG,
    "logsigmoid": UtilityFamily.LOG_SIGMOID,
    "linear": UtilityFamily.LINEAR,
}

_ALLOWED_KEYS = {
    UtilityFamily.POWER: {"gamma"},
    UtilityFamily.NEG_POWER: {"gamma", "eps", "ext"},
    UtilityFamily.LOG: {"eps", "ext"},
    UtilityFamily.LOG_SIGMOID: {"sigma", "ext"},
    UtilityFamily.LINEAR: {"ext"},
}


def _parse_params(body: str, text: str) -> Dict[str, str]:
    params = {}
    for item in filter(None, (part.strip() for part in body.split(","))):
        if "=" not in item:
            raise InvalidInputError(f"Malformed utility parameter '{item}' in '{text}'")
        key, value = (s.strip() for s in item.split("=", 1))
        key = key.lower()
        if key == "epsilon":
            key = "eps"
        if key in params:
            raise InvalidInputError(f"Duplicate utility parameter '{key}' in '{text}'")
        params[key] = value
    return params


def _parse_float(params: Dict[str, str], key: str, text: str) -> float:
    try:
        return float(params[key])
    except ValueError:
        raise InvalidInputError(f"Parameter {key}={params[key]!r} is not a number in '{text}'")


def parse_utility(text: str) -> UtilitySpec:
    """Parse strings such as 'power:gamma=0.8' or 'negpow:gamma=1,eps=0.1,ext=appendixA'"""
    if not isinstance(text, str) or not text.strip():
        raise InvalidInputError("Empty utility specification")
    head, _, body = text.strip().partition(":")
    family = _FAMILY_ALIASES.get(head.strip().lower())
    if family is None:
        raise InvalidInputError(f"Unknown utility family '{head}' in '{text}'")

    params = _parse_params(body, text)
    unknown = set(params) - _ALLOWED_KEYS[family]
    if unknown:
        raise InvalidInputError(
            f"Unknown parameter(s) {sorted(unknown)} for {family.value} in '{text}'")

    kwargs = {}
    if "gamma" in params:
        kwargs["gamma"] = _parse_float(params, "gamma", text)
    elif family in (UtilityFamily.POWER, UtilityFamily.NEG_POWER):
        raise InvalidInputError(f"{family.value} utility needs gamma in '{text}'")
    if "sigma" in params:
        kwargs["sigma"] = _parse_float(params, "sigma", text)
    if "eps" in params:
        kwargs["epsilon"] = _parse_float(params, "eps", text)
    if "ext" in params:
        ext = params["ext"].lower()
        if ext == "appendixa":
            kwargs["extension"] = Extension.APPENDIX_A
        elif ext == "none":
            kwargs["extension"] = Extension.NONE
        else:
            raise InvalidInputError(f"Unknown extension '{params['ext']}' in '{text}'")

    spec = UtilitySpec(family, **kwargs)
    logging.debug(f"Parsed utility {text!r} as {spec.to_string()}")
    return spec
