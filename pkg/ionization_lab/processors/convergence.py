"""
Convergence studies: one observable repeated across values of a single
numerical parameter.

Grid and propagation parameters (dr, dt, Lmax, Lb) track the ionization
probability P; kick parameters (eps, alpha) track δP with the kick at the
field maximum.
"""

import logging
from typing import Callable, List, Sequence

from tqdm import tqdm

from ..config.settings import RunConfig
from ..core.atom import ionization_probability
from ..core.fields import field_peak_time
from ..core.simulation import context_for
from ..models import ConvergencePoint
from ..utils import ConfigError
from .rates import FirstVariation

logger = logging.getLogger("ionization_lab.convergence")

PARAMETER_KEYS = {
    "dr": "grid.dr",
    "dt": "propagation.dt",
    "Lmax": "propagation.l_max",
    "Lb": "projector.l_b",
    "eps": "signal.epsilon",
    "alpha": "signal.alpha",
}
INTEGER_PARAMETERS = {"Lmax", "Lb"}
KICK_PARAMETERS = {"eps", "alpha"}


def _check_values(parameter: str, values: Sequence[float]):
    if parameter not in PARAMETER_KEYS:
        raise ConfigError(f"unknown parameter '{parameter}', expected one of {', '.join(PARAMETER_KEYS)}",
                          key="--parameter")
    if not values:
        raise ConfigError("at least one value required", key="--values")
    steps = [b - a for a, b in zip(values, values[1:])]
    if not (all(s > 0 for s in steps) or all(s < 0 for s in steps)):
        raise ConfigError("values must be strictly monotone", key="--values")


def _evaluator(config: RunConfig, parameter: str, values: Sequence[float],
               progress: bool) -> Callable[[float], float]:
    if parameter == "Lb":
        # one propagation, projected with every L_b
        widest = config.with_overrides({"projector.l_b": max(values)})
        context = context_for(widest)
        result = context.run(widest.pulse.to_pulse(), widest.propagation, progress=progress)
        return lambda value: ionization_probability(result.wavefunction, context.projector.truncated(value))

    if parameter in KICK_PARAMETERS:
        variation = FirstVariation(context_for(config), config)
        pulse = config.pulse.to_pulse()
        tau = field_peak_time(pulse)
        keyword = "alpha" if parameter == "alpha" else "epsilon"
        return lambda value: variation.delta_p(pulse.peak_field, tau, **{keyword: value})

    key = PARAMETER_KEYS[parameter]

    def probability(value: float) -> float:
        varied = config.with_overrides({key: value})
        context = context_for(varied)
        return context.probability(context.run(varied.pulse.to_pulse(), varied.propagation))

    return probability


def convergence_study(config: RunConfig, parameter: str, values: Sequence[float],
                      progress: bool = False) -> List[ConvergencePoint]:
    """
    Evaluate the observable at each value; failures are recorded per value

    Args:
        config: Base configuration
        parameter: One of dr, dt, Lmax, Lb, eps, alpha
        values: Strictly monotone parameter values (time values in a.u.)
        progress: Show a progress bar

    Returns:
        List[ConvergencePoint]: In the order of `values`
    """
    if parameter in INTEGER_PARAMETERS:
        values = [int(v) for v in values]
    values = list(values)
    _check_values(parameter, values)

    try:
        evaluate = _evaluator(config, parameter, values, progress)
    except ConfigError:
        raise
    except Exception as e:
        logger.error(f"Error preparing {parameter} study: {e}")
        return [ConvergencePoint(parameter, float(v), None, None, str(e)) for v in values]

    points: List[ConvergencePoint] = []
    previous = None
    for value in tqdm(values, desc=f"Converge {parameter}", disable=not progress):
        try:
            observable = float(evaluate(value))
        except Exception as e:
            logger.error(f"Error evaluating {parameter}={value}: {e}")
            points.append(ConvergencePoint(parameter, float(value), None, None, str(e)))
            continue
        change = None
        if previous is not None and previous != 0:
            change = (observable - previous) / abs(previous)
        points.append(ConvergencePoint(parameter, float(value), observable, change))
        logger.info(f"{parameter}={value}: observable={observable:.12e}")
        previous = observable
    return points
