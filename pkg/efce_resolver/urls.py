"""
URL configuration for efce_resolver project.

The `urlpatterns` list routes URLs to views. For more information please see:
    https://docs.djangoproject.com/en/4.2/topics/http/urls/
"""
from django.contrib import admin
from django.urls import path, include
from django.http import JsonResponse

def api_root(request):
    """API root endpoint with available endpoints"""
    return JsonResponse({
        'message': 'EFCE Subgame Resolver API',
        'version': '1.0',
        'endpoints': {
            'health': '/api/health/',
            'experiments': '/api/experiments/',
            'experiment': '/api/experiments/<run_id>/',
            'refinements': '/api/refinements/',
            'admin': '/admin/',
        },
    })

urlpatterns = [
    path('', api_root, name='api-root'),
    path('admin/', admin.site.urls),
    path('api/', include('resolver.urls')),
]
