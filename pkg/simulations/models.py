from django.db import models

class ExperimentRun(models.Model):
    KIND_CHOICES = [
        ("consensus_sweep", "Consensus sweep"),
        ("logreg", "Logistic regression"),
        ("single_run", "Single run"),
    ]

    kind = models.CharField(max_length=32, choices=KIND_CHOICES)
    config = models.JSONField()
    config_hash = models.CharField(max_length=64, db_index=True, help_text="SHA256 of the canonical config JSON")
    seeds = models.JSONField(default=list)
    spectral_profile = models.JSONField(null=True, blank=True)
    beta = models.FloatField(null=True, blank=True)
    omega = models.FloatField(null=True, blank=True)
    gamma = models.FloatField(null=True, blank=True)
    eta = models.FloatField(null=True, blank=True)
    status = models.CharField(max_length=32, blank=True)
    output_path = models.TextField(blank=True)

    created_at = models.DateTimeField(auto_now_add=True)

    class Meta:
        ordering = ["-created_at"]

    def __str__(self):
        return f"Run {self.id}: {self.kind} ({self.status or 'pending'})"

class SweepCell(models.Model):
    run = models.ForeignKey(ExperimentRun, on_delete=models.CASCADE, related_name="cells")
    n = models.IntegerField()
    omega = models.FloatField()
    gamma_policy = models.CharField(max_length=64)
    rounds_to_eps = models.BigIntegerField(null=True, blank=True)
    status = models.CharField(max_length=32)

    class Meta:
        ordering = ["gamma_policy", "n", "omega"]

    def __str__(self):
        return f"Cell n={self.n} omega={self.omega:g} {self.gamma_policy}: {self.status}"
