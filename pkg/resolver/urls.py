from django.urls import path
from .views import (
    ExperimentRunDetailAPIView,
    ExperimentRunListAPIView,
    HealthCheckAPIView,
    RefinementRecordListAPIView,
)

urlpatterns = [
    # Health check
    path('health/', HealthCheckAPIView.as_view(), name='health-check'),

    # Experiment runs
    path('experiments/', ExperimentRunListAPIView.as_view(), name='experiment-list'),
    path('experiments/<int:run_id>/', ExperimentRunDetailAPIView.as_view(), name='experiment-detail'),

    # Refinements
    path('refinements/', RefinementRecordListAPIView.as_view(), name='refinement-list'),
]
