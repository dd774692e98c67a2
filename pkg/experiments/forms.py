"""Validation of the experiment configuration, one form per section.

Every form's ``clean`` builds the domain object of its section and stores it
under ``cleaned_data['built']``; domain ``ConfigError``s surface as form errors.
"""
from dataclasses import replace

from django import forms
from django.core.exceptions import NON_FIELD_ERRORS

from core.exceptions import ConfigError
from features.standardize import SCOPES
from features.windows import WindowSpec
from gpr.kernel import KernelParams
from lag_forecaster.lags import ForecastConfig
from preprocess.conditioning import FILTER_KINDS, THRESHOLD_MODES, DenoiseConfig, FilterConfig, PipelineConfig
from xlstm.model import XlstmConfig

OPTIMIZE = 'optimize'


def _choices(values):
    return [(value, value) for value in values]


class SectionForm(forms.Form):
    def build(self, data):
        return dict(data)

    def clean(self):
        cleaned_data = super().clean()
        if self.errors:
            return cleaned_data
        try:
            cleaned_data['built'] = self.build(cleaned_data)
        except ConfigError as exc:
            raise forms.ValidationError(str(exc)) from exc
        return cleaned_data


class RunForm(forms.Form):
    seed = forms.IntegerField(min_value=0)
    threads = forms.IntegerField(min_value=1)


class DenoiseForm(SectionForm):
    wavelet_threshold = forms.FloatField(min_value=0.0)
    decomposition_level = forms.IntegerField(min_value=1)
    threshold_mode = forms.ChoiceField(choices=_choices(THRESHOLD_MODES))
    wavelet = forms.CharField()
    pad = forms.BooleanField(required=False)
    keep_approximation = forms.BooleanField(required=False)

    def build(self, data):
        return DenoiseConfig(**data)


class FilterForm(SectionForm):
    order = forms.IntegerField(min_value=1)
    kind = forms.ChoiceField(choices=_choices(FILTER_KINDS))
    cutoff_hz = forms.JSONField()
    sample_rate_hz = forms.FloatField()

    def clean_cutoff_hz(self):
        cutoff = self.cleaned_data['cutoff_hz']
        values = cutoff if isinstance(cutoff, list) else [cutoff]
        if not values or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in values):
            raise forms.ValidationError('cutoff_hz must be a number or a list of numbers')
        return tuple(float(v) for v in values)

    def build(self, data):
        return FilterConfig(**data)


class WindowForm(SectionForm):
    window_len = forms.IntegerField(min_value=1)
    overlap = forms.IntegerField(min_value=0)

    def build(self, data):
        return WindowSpec(**data)


class FeaturesForm(SectionForm):
    stages = forms.JSONField()
    zc_threshold = forms.FloatField(min_value=0.0)
    standardizer_scope = forms.ChoiceField(choices=_choices(SCOPES))

    def clean_stages(self):
        stages = self.cleaned_data['stages']
        if not isinstance(stages, list) or not all(isinstance(s, str) for s in stages):
            raise forms.ValidationError('stages must be a list of stage names')
        return tuple(stages)

    def build(self, data):
        # Stage names are checked here; the full chain is assembled with the
        # denoise and filter sections.
        PipelineConfig(stages=data['stages'])
        return dict(data)


class SplitForm(SectionForm):
    train_fraction = forms.FloatField()

    def clean_train_fraction(self):
        fraction = self.cleaned_data['train_fraction']
        if not 0.0 < fraction < 1.0:
            raise forms.ValidationError(f'train_fraction must lie in (0, 1), got {fraction}')
        return fraction


class GprForm(SectionForm):
    signal_variance = forms.CharField()
    length_scale = forms.CharField()
    noise_variance = forms.FloatField()
    max_train_rows = forms.IntegerField(min_value=2)
    optimize_rows = forms.IntegerField(min_value=2)
    starts = forms.IntegerField(min_value=1)

    def _hyperparameter(self, name):
        value = self.cleaned_data[name].strip()
        if value == OPTIMIZE:
            return value
        try:
            return float(value)
        except ValueError:
            raise forms.ValidationError(f"{name} must be a number or '{OPTIMIZE}'") from None

    def clean_signal_variance(self):
        return self._hyperparameter('signal_variance')

    def clean_length_scale(self):
        return self._hyperparameter('length_scale')

    def build(self, data):
        # Both hyperparameters are searched jointly, so one 'optimize' frees both.
        if OPTIMIZE in (data['signal_variance'], data['length_scale']):
            params = OPTIMIZE
        else:
            params = KernelParams(data['signal_variance'], data['length_scale'], data['noise_variance'])
        KernelParams(noise_variance=data['noise_variance'])
        return {**data, 'params': params}


class XlstmForm(SectionForm):
    hidden_size = forms.IntegerField(min_value=1)
    num_layers = forms.IntegerField(min_value=1)
    num_heads = forms.IntegerField(min_value=1)
    conv_kernel = forms.IntegerField(min_value=1)
    block_pattern = forms.JSONField()
    slstm_proj_factor = forms.FloatField()
    mlstm_proj_factor = forms.FloatField()
    learning_rate = forms.FloatField(min_value=0.0)
    train_steps = forms.IntegerField(min_value=0)
    sequence_len = forms.IntegerField(min_value=1)

    def __init__(self, *args, seed=0, **kwargs):
        self.seed = seed
        super().__init__(*args, **kwargs)

    def clean_block_pattern(self):
        pattern = self.cleaned_data['block_pattern']
        if not isinstance(pattern, list) or not all(isinstance(k, str) for k in pattern):
            raise forms.ValidationError("block_pattern must be a list such as ['m', 's']")
        return tuple(pattern)

    def build(self, data):
        return XlstmConfig(seed=self.seed, **data)


class ForecastForm(SectionForm):
    horizon = forms.IntegerField(min_value=1)
    context_len = forms.IntegerField(min_value=2)
    fine_tune_context_len = forms.IntegerField(min_value=2)
    num_samples = forms.IntegerField(min_value=1)
    lags = forms.JSONField()
    d_model = forms.IntegerField(min_value=1)
    num_layers = forms.IntegerField(min_value=1)
    num_heads = forms.IntegerField(min_value=1)
    learning_rate = forms.FloatField()
    batch_size = forms.IntegerField(min_value=1)
    batches_per_epoch = forms.IntegerField(min_value=1)
    epochs = forms.IntegerField(min_value=0)
    patience = forms.IntegerField(min_value=1)
    scale_floor = forms.FloatField()

    def __init__(self, *args, seed=0, **kwargs):
        self.seed = seed
        super().__init__(*args, **kwargs)

    def clean_lags(self):
        lags = self.cleaned_data['lags']
        if not isinstance(lags, list) or not all(isinstance(v, int) and not isinstance(v, bool) for v in lags):
            raise forms.ValidationError('lags must be a list of integers')
        return tuple(lags)

    def build(self, data):
        data = dict(data)
        fine_tune = data.pop('fine_tune_context_len')
        config = ForecastConfig(seed=self.seed, **data)
        replace(config, context_len=fine_tune)
        return {'zero_shot': config, 'fine_tune_context_len': fine_tune}


SECTION_FORMS = {
    'denoise': DenoiseForm,
    'filter': FilterForm,
    'window': WindowForm,
    'features': FeaturesForm,
    'split': SplitForm,
    'gpr': GprForm,
    'xlstm': XlstmForm,
    'forecast': ForecastForm,
}
SEEDED_SECTIONS = ('xlstm', 'forecast')


def error_text(form):
    parts = []
    for field, messages in form.errors.items():
        label = 'section' if field == NON_FIELD_ERRORS else field
        parts.append(f'{label}: {" ".join(str(m) for m in messages)}')
    return '; '.join(parts)
