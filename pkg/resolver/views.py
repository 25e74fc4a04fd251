import logging
from datetime import datetime

from rest_framework import status
from rest_framework.views import APIView

from efce_resolver.constants import ActionMessages
from efce_resolver.utils import create_api_response
from .models import ExperimentRun, RefinementRecord
from .serializers import ExperimentRunDetailSerializer, ExperimentRunSerializer, RefinementRecordSerializer
from .services import ConfigService

logger = logging.getLogger(__name__)


def _page_params(request):
    page = int(request.query_params.get('page', 1))
    per_page = min(int(request.query_params.get('per_page', 20)), 100)
    if page < 1 or per_page < 1:
        raise ValueError('page and per_page must be positive')
    return page, per_page


def _paginate(queryset, page, per_page):
    start = (page - 1) * per_page
    return queryset[start:start + per_page]


class HealthCheckAPIView(APIView):
    """
    GET /api/health/
    Health check endpoint
    """

    def get(self, request):
        return create_api_response(status.HTTP_200_OK, 'healthy', {
            'service': 'EFCE Subgame Resolver API',
            'version': '1.0.0',
            'config': ConfigService.validate_config(),
            'timestamp': datetime.now().isoformat()
        })


class ExperimentRunListAPIView(APIView):
    """
    GET /api/experiments/
    List experiment runs with pagination; filter with ?kind= and ?status=
    """

    def get(self, request):
        try:
            page, per_page = _page_params(request)
        except ValueError:
            return create_api_response(status.HTTP_400_BAD_REQUEST, ActionMessages.COMMON['INVALID'])
        try:
            runs = ExperimentRun.objects.all()
            kind = request.query_params.get('kind')
            if kind:
                runs = runs.filter(kind=kind)
            status_filter = request.query_params.get('status')
            if status_filter:
                runs = runs.filter(status=status_filter)

            serializer = ExperimentRunSerializer(_paginate(runs, page, per_page), many=True)
            return create_api_response(status.HTTP_200_OK, 'Experiment runs fetched', {
                'count': runs.count(),
                'page': page,
                'per_page': per_page,
                'results': serializer.data,
            })
        except Exception:
            logger.exception("Failed to list experiment runs")
            return create_api_response(status.HTTP_500_INTERNAL_SERVER_ERROR, ActionMessages.COMMON['SERVER_ERROR'])


class ExperimentRunDetailAPIView(APIView):
    """
    GET /api/experiments/{run_id}/
    One run with its welfare rows or convergence samples
    """

    def get(self, request, run_id):
        try:
            run = ExperimentRun.objects.prefetch_related('welfare_rows', 'samples').get(pk=run_id)
        except ExperimentRun.DoesNotExist:
            return create_api_response(status.HTTP_404_NOT_FOUND, ActionMessages.COMMON['NOT_FOUND'])
        return create_api_response(status.HTTP_200_OK, 'Experiment run fetched',
                                   ExperimentRunDetailSerializer(run).data)


class RefinementRecordListAPIView(APIView):
    """
    GET /api/refinements/
    Refinement records; filter with ?method=, ?game= and ?run=
    """

    def get(self, request):
        try:
            page, per_page = _page_params(request)
        except ValueError:
            return create_api_response(status.HTTP_400_BAD_REQUEST, ActionMessages.COMMON['INVALID'])
        try:
            records = RefinementRecord.objects.all()
            method = request.query_params.get('method')
            if method:
                records = records.filter(method=method)
            game = request.query_params.get('game')
            if game:
                records = records.filter(game=game)
            run = request.query_params.get('run')
            if run:
                records = records.filter(run_id=int(run))

            serializer = RefinementRecordSerializer(_paginate(records, page, per_page), many=True)
            return create_api_response(status.HTTP_200_OK, 'Refinement records fetched', {
                'count': records.count(),
                'page': page,
                'per_page': per_page,
                'results': serializer.data,
            })
        except ValueError:
            return create_api_response(status.HTTP_400_BAD_REQUEST, ActionMessages.COMMON['INVALID'])
        except Exception:
            logger.exception("Failed to list refinement records")
            return create_api_response(status.HTTP_500_INTERNAL_SERVER_ERROR, ActionMessages.COMMON['SERVER_ERROR'])
