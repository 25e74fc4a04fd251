from django.db import models


class ExperimentRun(models.Model):
    KIND_CHOICES = [
        ('welfare', 'Welfare'),
        ('convergence', 'Convergence'),
        ('refine', 'Refine'),
    ]
    STATUS_CHOICES = [
        ('pending', 'Pending'),
        ('running', 'Running'),
        ('completed', 'Completed'),
        ('failed', 'Failed'),
    ]

    kind = models.CharField(max_length=20, choices=KIND_CHOICES)
    status = models.CharField(max_length=20, choices=STATUS_CHOICES, default='pending')
    config = models.JSONField(default=dict)
    output_path = models.CharField(max_length=500, blank=True, default='')
    error = models.TextField(blank=True, default='')
    created_at = models.DateTimeField(auto_now_add=True)
    updated_at = models.DateTimeField(auto_now=True)

    class Meta:
        ordering = ['-created_at']

    def __str__(self):
        return f"{self.kind} run #{self.pk} ({self.status})"


class WelfareRow(models.Model):
    run = models.ForeignKey(ExperimentRun, on_delete=models.CASCADE, related_name='welfare_rows')
    width = models.IntegerField()
    height = models.IntegerField(default=1)
    ship = models.IntegerField(default=1)
    turns = models.IntegerField()
    gamma = models.FloatField()
    blueprint = models.CharField(max_length=100)
    seeds = models.IntegerField(default=1)
    subgame_pairs = models.IntegerField(default=0)
    blueprint_welfare = models.FloatField()
    refined_welfare = models.FloatField()
    max_violation = models.FloatField(default=0.0)
    seconds = models.FloatField(default=0.0)

    class Meta:
        ordering = ['run', 'id']

    def __str__(self):
        return f"{self.width}x{self.height} T={self.turns} γ={self.gamma} {self.blueprint}"


class ConvergenceSample(models.Model):
    run = models.ForeignKey(ExperimentRun, on_delete=models.CASCADE, related_name='samples')
    iteration = models.IntegerField()
    violation = models.FloatField()
    elapsed = models.FloatField(default=0.0)

    class Meta:
        ordering = ['run', 'iteration']

    def __str__(self):
        return f"iteration {self.iteration}: {self.violation:.3e}"


class RefinementRecord(models.Model):
    METHOD_CHOICES = [
        ('lp', 'Linear program'),
        ('cfr', 'Self-play'),
    ]

    run = models.ForeignKey(ExperimentRun, on_delete=models.CASCADE, related_name='refinements',
                            null=True, blank=True)
    game = models.CharField(max_length=255)
    blueprint = models.CharField(max_length=100, default='uniform')
    subgame = models.IntegerField()
    method = models.CharField(max_length=10, choices=METHOD_CHOICES)
    status = models.CharField(max_length=30)
    subgame_welfare = models.FloatField()
    blueprint_welfare = models.FloatField()
    max_violation = models.FloatField()
    iterations = models.IntegerField(default=0)
    elapsed = models.FloatField(default=0.0)
    converged = models.BooleanField(default=True)
    stats = models.JSONField(default=dict)
    created_at = models.DateTimeField(auto_now_add=True)

    class Meta:
        ordering = ['-created_at']

    def __str__(self):
        return f"{self.game} subgame {self.subgame} ({self.method})"
