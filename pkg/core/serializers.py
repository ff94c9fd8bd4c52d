from rest_framework import serializers

from log_pipeline.parsing import FORMATS
from model_core.transformer import ATTENTION_TARGETS
from peft_methods.config import METHODS, PREFIX, SUFFIX
from tokenizer.vocabulary import STYLES


class DatasetSerializer(serializers.Serializer):
    format = serializers.ChoiceField(choices=FORMATS)
    grouping = serializers.ChoiceField(choices=["session", "window"])
    window = serializers.IntegerField(min_value=1)
    stride = serializers.IntegerField(min_value=1, allow_null=True)
    train_ratio = serializers.FloatField(min_value=0.0, max_value=1.0)
    header_fields = serializers.IntegerField(min_value=0)
    min_count = serializers.IntegerField(min_value=1)
    max_len = serializers.IntegerField(min_value=2)

    def validate_train_ratio(self, value):
        if not 0.0 < value < 1.0:
            raise serializers.ValidationError("Must lie strictly between 0 and 1.")
        return value


class ModelConfigSerializer(serializers.Serializer):
    style = serializers.ChoiceField(choices=STYLES)
    layers = serializers.IntegerField(min_value=1)
    hidden = serializers.IntegerField(min_value=1)
    heads = serializers.IntegerField(min_value=1)
    ffn_dim = serializers.IntegerField(min_value=1)
    activation = serializers.ChoiceField(choices=["gelu", "relu"])
    dropout = serializers.FloatField(min_value=0.0, max_value=0.99)

    def validate(self, attrs):
        if attrs["hidden"] % attrs["heads"]:
            raise serializers.ValidationError({"heads": f"Must divide hidden ({attrs['hidden']})."})
        return attrs


class LoraSerializer(serializers.Serializer):
    rank = serializers.IntegerField(min_value=1)
    alpha = serializers.FloatField()
    targets = serializers.ListField(child=serializers.ChoiceField(choices=ATTENTION_TARGETS), allow_empty=False)
    layers = serializers.ListField(child=serializers.IntegerField(min_value=0), allow_null=True, required=False, default=None)

    def validate_alpha(self, value):
        if value <= 0:
            raise serializers.ValidationError("Must be greater than 0.")
        return value


class ReftSerializer(serializers.Serializer):
    rank = serializers.IntegerField(min_value=1)
    position = serializers.ChoiceField(choices=[PREFIX, SUFFIX], allow_null=True, required=False, default=None)
    layers = serializers.ListField(child=serializers.IntegerField(min_value=0), allow_null=True, required=False, default=None)


class TrainSerializer(serializers.Serializer):
    learning_rate = serializers.FloatField()
    batch_size = serializers.IntegerField(min_value=1)
    epochs = serializers.IntegerField(min_value=1)
    weight_decay = serializers.FloatField(min_value=0.0)
    beta1 = serializers.FloatField(min_value=0.0, max_value=0.999999)
    beta2 = serializers.FloatField(min_value=0.0, max_value=0.999999)
    eps = serializers.FloatField()
    precision = serializers.ChoiceField(choices=["float32", "float64"])
    class_weight = serializers.ChoiceField(choices=["balanced"], allow_null=True)

    def validate_learning_rate(self, value):
        if value <= 0:
            raise serializers.ValidationError("Must be greater than 0.")
        return value

    def validate_eps(self, value):
        if value <= 0:
            raise serializers.ValidationError("Must be greater than 0.")
        return value


class SweepSerializer(serializers.Serializer):
    ranks = serializers.ListField(child=serializers.IntegerField(min_value=1), allow_empty=False)
    ratios = serializers.ListField(child=serializers.FloatField(), allow_empty=False)
    rates = serializers.ListField(child=serializers.FloatField(min_value=0.0, max_value=1.0), allow_empty=False)
    inject_epochs = serializers.IntegerField(min_value=1)
    test_fraction = serializers.FloatField()
    jobs = serializers.IntegerField(min_value=1)

    def validate_ranks(self, value):
        if value != sorted(value):
            raise serializers.ValidationError("Ranks must be sorted ascending.")
        return value

    def validate_test_fraction(self, value):
        if not 0.0 < value < 1.0:
            raise serializers.ValidationError("Must lie strictly between 0 and 1.")
        return value

    def validate(self, attrs):
        limit = 1.0 - attrs["test_fraction"]
        if any(not 0.0 < ratio <= limit + 1e-12 for ratio in attrs["ratios"]):
            raise serializers.ValidationError({"ratios": f"Every ratio must lie in (0, {limit:g}]."})
        return attrs


class RunConfigSerializer(serializers.Serializer):
    """
    Everything a run depends on. Nested groups mirror `settings.PEFT_LAD`.
    """

    seed = serializers.IntegerField(min_value=0)
    peft = serializers.ChoiceField(choices=METHODS)
    dataset = DatasetSerializer()
    model = ModelConfigSerializer()
    lora = LoraSerializer()
    reft = ReftSerializer()
    train = TrainSerializer()
    sweep = SweepSerializer()
    out = serializers.CharField()

    def validate(self, attrs):
        hidden = attrs["model"]["hidden"]
        method = attrs["peft"]
        if attrs[method]["rank"] > hidden:
            raise serializers.ValidationError({method: {"rank": [f"Must not exceed the hidden size ({hidden})."]}})
        for group in ("lora", "reft"):
            layers = attrs[group].get("layers")
            if layers and max(layers) >= attrs["model"]["layers"]:
                raise serializers.ValidationError({group: {"layers": [f"The model has {attrs['model']['layers']} layers."]}})
        return attrs
