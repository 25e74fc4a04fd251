from rest_framework import serializers

from efce_resolver.exceptions import InputError
from .generators import BattleshipConfig


class BattleshipConfigSerializer(serializers.Serializer):
    width = serializers.IntegerField(min_value=1)
    height = serializers.IntegerField(min_value=1, default=1)
    ship = serializers.IntegerField(min_value=1, default=1)
    turns = serializers.IntegerField(min_value=1)
    gamma = serializers.FloatField(min_value=0.0, default=2.0)

    def validate(self, attrs):
        """Cross-field checks shared with BattleshipConfig.validate"""
        try:
            self._build(attrs).validate()
        except InputError as exc:
            raise serializers.ValidationError(str(exc))
        return attrs

    @staticmethod
    def _build(attrs) -> BattleshipConfig:
        return BattleshipConfig(
            width=attrs['width'],
            height=attrs.get('height', 1),
            ship=attrs.get('ship', 1),
            turns=attrs['turns'],
            gamma=attrs.get('gamma', 2.0),
        )

    def to_config(self) -> BattleshipConfig:
        return self._build(self.validated_data)
