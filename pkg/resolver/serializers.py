from rest_framework import serializers

from correlation.plans import BlueprintSpec
from games.serializers import BattleshipConfigSerializer
from refinement.lp_refine import REFINEMENT_OBJECTIVES
from .experiments import ConvergenceSettings, WelfareGrid
from .models import ConvergenceSample, ExperimentRun, RefinementRecord, WelfareRow


class WelfareRowSerializer(serializers.ModelSerializer):
    class Meta:
        model = WelfareRow
        exclude = ['run']


class ConvergenceSampleSerializer(serializers.ModelSerializer):
    class Meta:
        model = ConvergenceSample
        fields = ['iteration', 'violation', 'elapsed']


class ExperimentRunSerializer(serializers.ModelSerializer):
    class Meta:
        model = ExperimentRun
        fields = '__all__'
        read_only_fields = ['id', 'status', 'created_at', 'updated_at']


class ExperimentRunDetailSerializer(ExperimentRunSerializer):
    welfare_rows = WelfareRowSerializer(many=True, read_only=True)
    samples = ConvergenceSampleSerializer(many=True, read_only=True)


class RefinementRecordSerializer(serializers.ModelSerializer):
    class Meta:
        model = RefinementRecord
        fields = '__all__'


class BlueprintSerializer(serializers.Serializer):
    kind = serializers.ChoiceField(choices=['uniform', 'jittered'], default='uniform')
    weight = serializers.FloatField(min_value=0.0, max_value=1.0, default=0.5)
    seeds = serializers.ListField(child=serializers.IntegerField(min_value=0), default=[0], allow_empty=False)

    @staticmethod
    def to_specs(attrs):
        if attrs.get('kind', 'uniform') == 'uniform':
            return [BlueprintSpec('uniform')]
        return [BlueprintSpec('jittered', attrs.get('weight', 0.5), seed) for seed in attrs.get('seeds', [0])]


class ExperimentGridSerializer(serializers.Serializer):
    rounds = serializers.IntegerField(min_value=1, default=1)
    subgame = serializers.IntegerField(min_value=1, default=1)
    method = serializers.ChoiceField(choices=['lp', 'cfr'], default='lp')
    objective = serializers.ChoiceField(choices=list(REFINEMENT_OBJECTIVES), default='max_subgame_sw')
    games = BattleshipConfigSerializer(many=True)
    blueprints = BlueprintSerializer(many=True)

    def to_grid(self) -> WelfareGrid:
        data = self.validated_data
        return WelfareGrid(
            games=[BattleshipConfigSerializer._build(game) for game in data['games']],
            blueprints=[BlueprintSerializer.to_specs(entry) for entry in data['blueprints']],
            rounds=data.get('rounds', 1),
            subgame=data.get('subgame', 1),
            method=data.get('method', 'lp'),
            objective=data.get('objective', 'max_subgame_sw'),
        )


class ConvergenceConfigSerializer(serializers.Serializer):
    game = BattleshipConfigSerializer()
    rounds = serializers.IntegerField(min_value=1, default=1)
    subgame = serializers.IntegerField(min_value=1, default=1)
    blueprint = BlueprintSerializer(default=dict)
    epsilon = serializers.FloatField(min_value=0.0, default=1e-2)
    max_iters = serializers.IntegerField(min_value=0, default=20000)
    audit_every = serializers.IntegerField(min_value=1, default=50)

    def validate_epsilon(self, value):
        if value <= 0:
            raise serializers.ValidationError("Epsilon must be positive.")
        return value

    def to_settings(self) -> ConvergenceSettings:
        data = self.validated_data
        blueprint = BlueprintSerializer.to_specs(data.get('blueprint') or {})[0]
        return ConvergenceSettings(
            game=BattleshipConfigSerializer._build(data['game']),
            blueprint=blueprint,
            rounds=data.get('rounds', 1),
            subgame=data.get('subgame', 1),
            epsilon=data.get('epsilon', 1e-2),
            max_iters=data.get('max_iters', 20000),
            audit_every=data.get('audit_every', 50),
        )
