"""
Validation of experiment config files, one form per section.

Sections arrive as already-parsed JSON; each form is bound to the section's
defaults overlaid with the given values, and ``clean()`` enforces the
cross-field rules the numerical config objects rely on.
"""
import math

from django import forms
from django.core.exceptions import ValidationError

from spectra.similarity import MEASURES

SCHEMA_VERSION = 1


def _check_increasing(values, label, strict=True):
    if not isinstance(values, list) or not values:
        raise ValidationError(f"{label} must be a non-empty list of numbers.")
    for value in values:
        if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
            raise ValidationError(f"{label} contains a non-numeric entry: {value!r}.")
    for a, b in zip(values, values[1:]):
        if b < a or (strict and b == a):
            raise ValidationError(f"{label} must be {'strictly increasing' if strict else 'non-decreasing'}.")


class LatticeForm(forms.Form):
    lx = forms.IntegerField(min_value=2, help_text="Plaquettes along x")
    ly = forms.IntegerField(min_value=2, help_text="Plaquettes along y")


class HamiltonianForm(forms.Form):
    j_p = forms.FloatField()
    j_s = forms.FloatField()
    h = forms.FloatField(help_text="Longitudinal field for single runs")
    h_grid = forms.JSONField(required=False, help_text="Field values of a sweep")

    def clean_h_grid(self):
        grid = self.cleaned_data.get('h_grid')
        if grid is None:
            return []
        _check_increasing(grid, "h_grid", strict=False)
        return [float(h) for h in grid]


class SamplerForm(forms.Form):
    n_chains = forms.IntegerField(min_value=1)
    n_steps = forms.IntegerField(min_value=2)
    n_burn = forms.IntegerField(min_value=0, required=False)
    p_spin_flip = forms.FloatField()
    thinning = forms.IntegerField(min_value=1)
    n_batches = forms.IntegerField(min_value=1)

    def clean(self):
        cleaned = super().clean()
        p = cleaned.get('p_spin_flip')
        if p is not None and not 0 < p < 1:
            raise ValidationError("p_spin_flip must lie strictly between 0 and 1.")
        n_steps, n_burn = cleaned.get('n_steps'), cleaned.get('n_burn')
        if n_steps is not None and n_burn is not None and n_burn >= n_steps:
            raise ValidationError("n_burn must be smaller than n_steps.")
        return cleaned


class OptimizerForm(forms.Form):
    learning_rate = forms.FloatField()
    beta1 = forms.FloatField()
    beta2 = forms.FloatField()
    epsilon = forms.FloatField()
    n_iterations = forms.IntegerField(min_value=1)
    window = forms.IntegerField(min_value=1)
    tolerance = forms.FloatField(min_value=0.0)

    def clean(self):
        cleaned = super().clean()
        if cleaned.get('learning_rate') is not None and cleaned['learning_rate'] <= 0:
            raise ValidationError("learning_rate must be positive.")
        for beta in ('beta1', 'beta2'):
            if cleaned.get(beta) is not None and not 0 < cleaned[beta] < 1:
                raise ValidationError(f"{beta} must lie in (0, 1).")
        return cleaned


class SeedsForm(forms.Form):
    source = forms.ChoiceField(choices=[('vmc', 'optimized'), ('analytic', 'analytic')])
    n_initializations = forms.IntegerField(min_value=1)
    noise = forms.FloatField(min_value=0.0, help_text="Uniform noise added to the analytic sector states")


class EnsembleForm(forms.Form):
    temperature = forms.FloatField()
    k_chains = forms.IntegerField(min_value=1)
    n_steps = forms.IntegerField(min_value=1)
    m_keep = forms.IntegerField(min_value=1, required=False)
    p_m = forms.FloatField(min_value=0.0, max_value=1.0)
    xi = forms.FloatField()
    thinning = forms.IntegerField(min_value=1)
    max_retries = forms.IntegerField(min_value=0)

    def clean(self):
        cleaned = super().clean()
        if cleaned.get('temperature') is not None and cleaned['temperature'] <= 0:
            raise ValidationError("temperature must be positive.")
        if cleaned.get('xi') is not None and cleaned['xi'] <= 0:
            raise ValidationError("xi must be positive.")
        n_steps, m_keep = cleaned.get('n_steps'), cleaned.get('m_keep')
        if n_steps is not None and m_keep is not None and m_keep > n_steps:
            raise ValidationError("m_keep cannot exceed n_steps.")
        return cleaned


class SimilarityForm(forms.Form):
    measure = forms.ChoiceField(choices=[(m, m) for m in MEASURES])
    n_g = forms.IntegerField(min_value=0, help_text="Greedy loop moves per pair for the string measure")
    fraction = forms.FloatField(min_value=0.0, max_value=1.0)
    overlap = forms.ChoiceField(choices=[('auto', 'auto'), ('exact', 'exact'), ('sampled', 'sampled')])


class DiffusionForm(forms.Form):
    epsilon = forms.JSONField(help_text='A list of values or {"start", "stop", "num"} log-spaced')
    near_one_delta = forms.FloatField()
    gap_threshold = forms.FloatField(min_value=0.0)
    min_persistence = forms.IntegerField(min_value=1)
    max_sectors = forms.IntegerField(min_value=2, required=False)
    cluster_epsilon = forms.FloatField(required=False)
    report_epsilon = forms.FloatField()
    n_eigenvalues = forms.IntegerField(min_value=1)
    n_components = forms.IntegerField(min_value=1)

    def clean_epsilon(self):
        epsilon = self.cleaned_data.get('epsilon')
        if isinstance(epsilon, dict):
            if set(epsilon) != {'start', 'stop', 'num'}:
                raise ValidationError('An epsilon range needs exactly "start", "stop" and "num".')
            start, stop, num = epsilon['start'], epsilon['stop'], epsilon['num']
            if not isinstance(num, int) or isinstance(num, bool) or num < 1:
                raise ValidationError("The epsilon range needs a positive integer num.")
            _check_increasing([start, stop] if num > 1 else [start], "epsilon range")
            if start <= 0:
                raise ValidationError("epsilon values must be positive.")
            return {'start': float(start), 'stop': float(stop), 'num': num}
        _check_increasing(epsilon, "epsilon grid")
        if epsilon[0] <= 0:
            raise ValidationError("epsilon values must be positive.")
        return [float(e) for e in epsilon]

    def clean(self):
        cleaned = super().clean()
        delta = cleaned.get('near_one_delta')
        if delta is not None and not 0 < delta < 1:
            raise ValidationError("near_one_delta must lie in (0, 1).")
        for name in ('cluster_epsilon', 'report_epsilon'):
            if cleaned.get(name) is not None and cleaned[name] <= 0:
                raise ValidationError(f"{name} must be positive.")
        return cleaned


class ClusteringForm(forms.Form):
    k = forms.IntegerField(min_value=1)
    n_restarts = forms.IntegerField(min_value=1)


class ObservablesForm(forms.Form):
    wilson = forms.BooleanField(required=False)
    mode = forms.ChoiceField(choices=[('auto', 'auto'), ('exact', 'exact'), ('sampled', 'sampled')])


class FidelityForm(forms.Form):
    enabled = forms.BooleanField(required=False)
    h_grid = forms.JSONField(required=False, help_text="Field values of the fidelity scan; empty reuses hamiltonian.h_grid")

    def clean_h_grid(self):
        grid = self.cleaned_data.get('h_grid')
        if grid is None:
            return []
        _check_increasing(grid, "fidelity h_grid", strict=False)
        if len(grid) < 2:
            raise ValidationError("fidelity h_grid needs at least two field values.")
        return [float(h) for h in grid]


class RunForm(forms.Form):
    schema_version = forms.IntegerField()
    name = forms.SlugField(max_length=100)
    seed = forms.IntegerField(min_value=0)
    output_dir = forms.CharField(required=False, max_length=500)

    def clean_schema_version(self):
        version = self.cleaned_data['schema_version']
        if version != SCHEMA_VERSION:
            raise ValidationError(f"Unsupported schema_version {version}; expected {SCHEMA_VERSION}.")
        return version


SECTION_FORMS = {
    'lattice': LatticeForm,
    'hamiltonian': HamiltonianForm,
    'sampler': SamplerForm,
    'optimizer': OptimizerForm,
    'seeds': SeedsForm,
    'ensemble': EnsembleForm,
    'similarity': SimilarityForm,
    'diffusion': DiffusionForm,
    'clustering': ClusteringForm,
    'observables': ObservablesForm,
    'fidelity': FidelityForm,
}


def clean_config(data, defaults) -> dict:
    """
    Validate a parsed config against the section forms. ``defaults`` maps each
    section (and ``'run'`` for the top-level keys) to its default values.
    Returns the cleaned sections; raises ValidationError listing every problem.
    """
    if not isinstance(data, dict):
        raise ValidationError("The config must be a JSON object.")
    errors = []
    unknown = set(data) - set(SECTION_FORMS) - set(RunForm.base_fields)
    errors.extend(f"unknown section {name!r}" for name in sorted(unknown))

    cleaned = {}
    for section, form_class in [('run', RunForm)] + list(SECTION_FORMS.items()):
        given = {k: data[k] for k in RunForm.base_fields if k in data} if section == 'run' else data.get(section, {})
        if not isinstance(given, dict):
            errors.append(f"{section}: must be an object")
            continue
        errors.extend(f"{section}: unknown key {key!r}" for key in sorted(set(given) - set(form_class.base_fields)))
        form = form_class(data={**defaults[section], **given})
        if form.is_valid():
            cleaned[section] = {name: form.cleaned_data[name] for name in form_class.base_fields}
        else:
            for field, messages in form.errors.items():
                prefix = section if field == '__all__' else f"{section}.{field}"
                errors.extend(f"{prefix}: {message}" for message in messages)
    if errors:
        raise ValidationError(errors)
    return cleaned
